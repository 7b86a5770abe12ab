//! Biorthogonal quasi modes of a dissipatively coupled mode set.
//!
//! The mean amplitudes evolve as `d⟨a⟩/dt = A ⟨a⟩` with the complex symmetric
//! generator
//!
//! ```text
//! A = ½(L − Γ) − i W,     W = diag(ω_n) for a mode basis.
//! ```
//!
//! An eigenvector `b` of `A` defines the expansion coefficients `c_n = b_n/ε_n`
//! of a quasi mode; its left partner is `ε_n² c_n`. Because `A = Aᵀ`, distinct
//! eigenvectors are orthogonal under the *unconjugated* product `bᵀb'`, which
//! is the biorthogonality of the quasi modes. Their norm `s = bᵀb` can be far
//! smaller than `‖b‖²`, and the ratio is the Petermann excess-noise factor
//!
//! ```text
//! K = (‖b‖² / |bᵀb|)².
//! ```

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::eigen::{eigendecompose, EigenError, Eigendecomposition};
use crate::mode_basis::{BasisError, ModeBasis, SpatialGrid, C64};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Relative eigenvalue separation below which two modes are flagged.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;
/// |bᵀb| / ‖b‖² below which a mode is flagged as (near) exceptional.
pub const EXCEPTIONAL_TOLERANCE: f64 = 1e-10;
/// Relative smallest singular value a degenerate cluster needs before its
/// vectors are treated as a genuine eigenbasis.
const CLUSTER_INDEPENDENCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasiModeError {
    #[error("{name} is {rows}x{cols}, expected {expected}x{expected}")]
    Dimension {
        name: &'static str,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("{name} is not symmetric (max |M - Mᵀ| = {deviation:.3e})")]
    NotSymmetric { name: &'static str, deviation: f64 },
    #[error("vacuum amplitudes must be positive and finite")]
    InvalidAmplitudes,
    #[error("eigensolver failed: {0}")]
    Eigen(#[from] EigenError),
    #[error("quasi mode {mode} is flagged as {flag}; the biorthogonal set is incomplete")]
    Flagged { mode: usize, flag: ModeFlag },
    #[error("quasi mode {mode} has a zero-norm eigenvector")]
    ZeroNorm { mode: usize },
    #[error("quasi mode {mode} has non-positive frequency {frequency}; its vacuum amplitude is undefined")]
    NonPositiveFrequency { mode: usize, frequency: f64 },
    #[error("expected {expected} amplitudes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Generator of the mean-amplitude dynamics together with the pieces it was
/// built from.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    generator: DMatrix<C64>,
    gain: DMatrix<f64>,
    loss: DMatrix<f64>,
    frequency: DMatrix<f64>,
    eps: DVector<f64>,
}

impl DriftMatrix {
    /// `A = ½(L − Γ) − i diag(ω)` on the basis frequencies.
    pub fn build(
        basis: &ModeBasis,
        gain: &DMatrix<f64>,
        loss: &DMatrix<f64>,
    ) -> Result<Self, QuasiModeError> {
        let w = DMatrix::from_diagonal(basis.frequencies());
        Self::from_parts(gain, loss, &w, basis.vacuum_amplitudes())
    }

    /// General form with a real symmetric frequency matrix `W` and weights
    /// `eps` (all ones when the coordinates are already field amplitudes).
    pub fn from_parts(
        gain: &DMatrix<f64>,
        loss: &DMatrix<f64>,
        frequency: &DMatrix<f64>,
        eps: &DVector<f64>,
    ) -> Result<Self, QuasiModeError> {
        let n = eps.len();
        for (name, m) in [("L", gain), ("Gamma", loss), ("W", frequency)] {
            check_square(name, m, n)?;
            check_symmetric(name, m)?;
        }
        if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(QuasiModeError::InvalidAmplitudes);
        }
        let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
        let gain = sym(gain);
        let loss = sym(loss);
        let frequency = sym(frequency);
        let generator = DMatrix::from_fn(n, n, |i, j| {
            C64::new(0.5 * (gain[(i, j)] - loss[(i, j)]), -frequency[(i, j)])
        });
        Ok(Self {
            generator,
            gain,
            loss,
            frequency,
            eps: eps.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    pub fn generator(&self) -> &DMatrix<C64> {
        &self.generator
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn loss(&self) -> &DMatrix<f64> {
        &self.loss
    }

    pub fn frequency_matrix(&self) -> &DMatrix<f64> {
        &self.frequency
    }

    pub fn eps(&self) -> &DVector<f64> {
        &self.eps
    }

    /// ½(L − Γ).
    pub fn net_rate(&self) -> DMatrix<f64> {
        (&self.gain - &self.loss) * 0.5
    }

    pub fn frequency_is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.frequency[(i, j)] == 0.0))
    }

    /// Largest |ω| on the diagonal of W.
    pub fn max_frequency(&self) -> f64 {
        self.frequency.diagonal().amax()
    }

    /// Spectral radius bound of the gain and loss matrices.
    pub fn max_rate(&self) -> f64 {
        let l = self.gain.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let g = self.loss.iter().map(|v| v.abs()).fold(0.0, f64::max);
        self.dim() as f64 * l.max(g)
    }
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<(), QuasiModeError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(QuasiModeError::Dimension {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
            expected: n,
        });
    }
    Ok(())
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<(), QuasiModeError> {
    let scale = m.amax().max(1.0);
    let deviation = (m - m.transpose()).amax();
    if deviation > SYMMETRY_TOLERANCE * scale {
        return Err(QuasiModeError::NotSymmetric { name, deviation });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeFlag {
    Regular,
    /// Eigenvalue within the degeneracy tolerance of mode `partner`.
    NearDegenerate {
        partner: usize,
    },
    /// Biorthogonal norm has (numerically) vanished; K diverges.
    Exceptional,
}

impl std::fmt::Display for ModeFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeFlag::Regular => write!(f, "regular"),
            ModeFlag::NearDegenerate { partner } => {
                write!(f, "near-degenerate with mode {partner}")
            }
            ModeFlag::Exceptional => write!(f, "exceptional"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRates {
    pub gain: f64,
    pub loss: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone)]
pub struct QuasiMode {
    /// μ = ½(λ − γ) − iΩ.
    pub eigenvalue: C64,
    /// Expansion coefficients c_n, unit 2-norm.
    pub right: DVector<C64>,
    /// Left eigenvector ε_n² c_n.
    pub left: DVector<C64>,
    /// b_n = ε_n c_n, eigenvector of the generator.
    pub weighted: DVector<C64>,
    /// Biorthogonal norm s = Σ ε_n² c_n².
    pub norm: C64,
    pub rates: ModeRates,
    pub flag: ModeFlag,
}

impl QuasiMode {
    /// Excess-noise factor (Σ ε²|c|² / |Σ ε² c²|)², infinite at an
    /// exceptional point.
    pub fn petermann_k(&self) -> f64 {
        if self.flag == ModeFlag::Exceptional {
            return f64::INFINITY;
        }
        k_factor_from_weighted(self.weighted.as_slice())
    }

    /// 𝔈 = √(Ω/2).
    pub fn vacuum_amplitude(&self) -> f64 {
        (0.5 * self.rates.frequency).sqrt()
    }
}

/// K = (‖b‖² / |bᵀb|)² for an eigenvector of a complex symmetric generator.
pub fn k_factor_from_weighted(b: &[C64]) -> f64 {
    let herm: f64 = b.iter().map(|v| v.norm_sqr()).sum();
    let bilinear: C64 = b.iter().map(|v| v * v).sum();
    if herm == 0.0 {
        return f64::NAN;
    }
    if bilinear.norm() <= EXCEPTIONAL_TOLERANCE * herm {
        return f64::INFINITY;
    }
    (herm / bilinear.norm()).powi(2)
}

/// Complete output of [`solve_quasimodes`].
#[derive(Debug, Clone)]
pub struct QuasiModeSet {
    modes: Vec<QuasiMode>,
    eps: DVector<f64>,
}

/// Eigen-decomposes the generator and returns the quasi modes sorted by
/// frequency Ω, then by net gain Re μ.
pub fn solve_quasimodes(drift: &DriftMatrix) -> Result<QuasiModeSet, QuasiModeError> {
    let n = drift.dim();
    let eps = drift.eps();
    let mut decomposition = eigendecompose(drift.generator())?;
    orthogonalize_clusters(&mut decomposition);
    let mut modes = Vec::with_capacity(n);
    for k in 0..n {
        let raw = decomposition.vectors.column(k).into_owned();
        let weighted = fix_representative(&raw, eps);
        let right = DVector::from_fn(n, |i, _| weighted[i] / eps[i]);
        let left = DVector::from_fn(n, |i, _| right[i] * eps[i] * eps[i]);
        let norm = weighted.iter().map(|v| v * v).sum();
        let rates = rates_of(&weighted, drift).ok_or(QuasiModeError::ZeroNorm { mode: k })?;
        modes.push(QuasiMode {
            eigenvalue: decomposition.values[k],
            right,
            left,
            weighted,
            norm,
            rates,
            flag: ModeFlag::Regular,
        });
    }
    sort_modes(&mut modes);
    flag_modes(&mut modes);
    Ok(QuasiModeSet {
        modes,
        eps: eps.clone(),
    })
}

/// Within each cluster of (numerically) equal eigenvalues the eigenvectors
/// are only fixed up to mixing. Re-mix them by the Takagi factorization
/// G = VᵀV = U Σ Uᵀ (U unitary, Σ ≥ 0): the columns of V Ū stay Hermitian
/// orthonormal and become orthogonal under the bilinear form bᵀb, with
/// bilinear norms σ_i. A cluster spanning a real subspace thus gets real
/// vectors (K = 1) rather than, say, running waves with vanishing bᵀb.
fn orthogonalize_clusters(dec: &mut Eigendecomposition) {
    let n = dec.values.len();
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| {
                let scale = dec.values[i].norm().max(dec.values[j].norm());
                !assigned[j]
                    && (dec.values[i] - dec.values[j]).norm() < DEGENERACY_TOLERANCE * scale
            })
            .collect();
        for &j in &members {
            assigned[j] = true;
        }
        if members.len() < 2 {
            continue;
        }
        let rows = dec.vectors.nrows();
        let raw = DMatrix::from_fn(rows, members.len(), |r, c| dec.vectors[(r, members[c])]);
        // a defective cluster (exceptional point) has nearly parallel vectors
        // and no eigenbasis to re-mix; leave it for flagging
        let sv = raw.clone().singular_values();
        if sv.min() < CLUSTER_INDEPENDENCE * sv.max() {
            continue;
        }
        // Hermitian-orthonormal basis of the cluster span first
        let v = raw.qr().q();
        let u = takagi_vectors(&(v.transpose() * &v));
        let mixed = &v * u.map(|x| x.conj());
        for (c, &j) in members.iter().enumerate() {
            dec.vectors.set_column(j, &mixed.column(c));
        }
    }
}

/// Unitary U with G = U Σ Uᵀ for complex symmetric G, from the positive
/// half of the spectrum of the real symmetric [[Re G, Im G], [Im G, −Re G]].
fn takagi_vectors(g: &DMatrix<C64>) -> DMatrix<C64> {
    let k = g.nrows();
    let big = DMatrix::from_fn(2 * k, 2 * k, |r, c| {
        let (a, b) = (g[(r % k, c % k)].re, g[(r % k, c % k)].im);
        match (r < k, c < k) {
            (true, true) => a,
            (false, false) => -a,
            _ => b,
        }
    });
    let eig = nalgebra::SymmetricEigen::new(big);
    let mut order: Vec<usize> = (0..2 * k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let mut u = DMatrix::from_fn(k, k, |r, c| {
        let col = order[c];
        C64::new(eig.eigenvectors[(r, col)], eig.eigenvectors[(r + k, col)])
    });
    for mut col in u.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= C64::new(norm, 0.0);
        }
    }
    u
}

/// Scales c to unit norm and rotates b so its largest entry is real positive.
fn fix_representative(raw: &DVector<C64>, eps: &DVector<f64>) -> DVector<C64> {
    let mut pivot = 0;
    let mut largest = -1.0;
    for (i, v) in raw.iter().enumerate() {
        if v.norm() > largest {
            largest = v.norm();
            pivot = i;
        }
    }
    let phase = if largest > 0.0 {
        raw[pivot].conj() / largest
    } else {
        C64::new(1.0, 0.0)
    };
    let c_norm = raw
        .iter()
        .zip(eps.iter())
        .map(|(v, e)| (v / *e).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = if c_norm > 0.0 { 1.0 / c_norm } else { 1.0 };
    raw.map(|v| v * phase * scale)
}

fn rates_of(b: &DVector<C64>, drift: &DriftMatrix) -> Option<ModeRates> {
    let herm = b.norm_squared();
    if herm == 0.0 {
        return None;
    }
    let quad = |m: &DMatrix<f64>| {
        let mb = DVector::from_fn(b.len(), |i, _| {
            (0..b.len()).map(|j| b[j] * m[(i, j)]).sum::<C64>()
        });
        b.dotc(&mb).re / herm
    };
    Some(ModeRates {
        gain: quad(drift.gain()),
        loss: quad(drift.loss()),
        frequency: quad(drift.frequency_matrix()),
    })
}

fn sort_modes(modes: &mut [QuasiMode]) {
    modes.sort_by(|a, b| a.rates.frequency.total_cmp(&b.rates.frequency));
    // runs of equal frequency (to rounding) are ordered by net gain
    let mut start = 0;
    while start < modes.len() {
        let base = modes[start].rates.frequency;
        let tol = 1e-9 * base.abs().max(1.0);
        let mut end = start + 1;
        while end < modes.len() && (modes[end].rates.frequency - base).abs() <= tol {
            end += 1;
        }
        modes[start..end].sort_by(|a, b| a.eigenvalue.re.total_cmp(&b.eigenvalue.re));
        start = end;
    }
}

fn flag_modes(modes: &mut [QuasiMode]) {
    let n = modes.len();
    for i in 0..n {
        let herm = modes[i].weighted.norm_squared();
        if modes[i].norm.norm() < EXCEPTIONAL_TOLERANCE * herm {
            modes[i].flag = ModeFlag::Exceptional;
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let scale = modes[i].eigenvalue.norm().max(modes[j].eigenvalue.norm());
            if (modes[i].eigenvalue - modes[j].eigenvalue).norm() < DEGENERACY_TOLERANCE * scale {
                modes[i].flag = ModeFlag::NearDegenerate { partner: j };
                break;
            }
        }
    }
}

/// Rates (λ_ν, γ_ν, Ω_ν) from the quadratic forms of L, Γ and W in each
/// eigenvector, normalized by Σ ε²|c|².
pub fn decompose_rates(
    set: &QuasiModeSet,
    drift: &DriftMatrix,
) -> Result<Vec<ModeRates>, QuasiModeError> {
    set.modes
        .iter()
        .enumerate()
        .map(|(k, m)| rates_of(&m.weighted, drift).ok_or(QuasiModeError::ZeroNorm { mode: k }))
        .collect()
}

/// Quasi-mode function U_ν and its adjoint Ū_ν sampled on a grid.
#[derive(Debug, Clone)]
pub struct QuasiModeFunctions {
    pub right: Vec<C64>,
    pub adjoint: Vec<C64>,
}

impl QuasiModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[QuasiMode] {
        &self.modes
    }

    pub fn mode(&self, nu: usize) -> &QuasiMode {
        &self.modes[nu]
    }

    pub fn eps(&self) -> &DVector<f64> {
        &self.eps
    }

    /// No mode carries a degeneracy or exceptional flag.
    pub fn is_complete(&self) -> bool {
        self.modes.iter().all(|m| m.flag == ModeFlag::Regular)
    }

    pub fn ensure_complete(&self) -> Result<(), QuasiModeError> {
        match self
            .modes
            .iter()
            .enumerate()
            .find(|(_, m)| m.flag != ModeFlag::Regular)
        {
            Some((mode, m)) => Err(QuasiModeError::Flagged { mode, flag: m.flag }),
            None => Ok(()),
        }
    }

    pub fn petermann_k_coeff(&self, nu: usize) -> f64 {
        self.modes[nu].petermann_k()
    }

    /// Columns b_ν.
    pub fn weighted_matrix(&self) -> DMatrix<C64> {
        let n = self.eps.len();
        DMatrix::from_fn(n, self.modes.len(), |i, k| self.modes[k].weighted[i])
    }

    /// max over ν ≠ μ of |Σ ε² c^ν c^μ| / (‖b_ν‖ ‖b_μ‖), and the relative
    /// mismatch of the diagonal against s_ν.
    pub fn biorthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.modes.iter().enumerate() {
            for (j, b) in self.modes.iter().enumerate() {
                let pair: C64 = a
                    .right
                    .iter()
                    .zip(b.right.iter())
                    .zip(self.eps.iter())
                    .map(|((x, y), e)| x * y * (e * e))
                    .sum();
                let target = if i == j { a.norm } else { C64::new(0.0, 0.0) };
                let scale = a.weighted.norm() * b.weighted.norm();
                worst = worst.max((pair - target).norm() / scale);
            }
        }
        worst
    }

    /// max |Σ_ν ε_n² c_n c_m / s_ν − δ_nm|.
    pub fn completeness_error(&self) -> f64 {
        let n = self.eps.len();
        let mut worst: f64 = 0.0;
        for row in 0..n {
            for col in 0..n {
                let sum: C64 = self
                    .modes
                    .iter()
                    .map(|m| m.right[row] * m.right[col] * self.eps[row] * self.eps[row] / m.norm)
                    .sum();
                let target = if row == col { 1.0 } else { 0.0 };
                worst = worst.max((sum - target).norm());
            }
        }
        worst
    }

    /// max_ν ‖M c − μ c‖ / ‖c‖ with M = D⁻¹ A D the coefficient-space matrix.
    pub fn eigen_residual(&self, drift: &DriftMatrix) -> f64 {
        let a = drift.generator();
        self.modes
            .iter()
            .map(|m| {
                let b = &m.weighted;
                let ab = a * b;
                let r =
                    DVector::from_fn(b.len(), |i, _| (ab[i] - m.eigenvalue * b[i]) / self.eps[i]);
                r.norm() / m.right.norm()
            })
            .fold(0.0, f64::max)
    }

    /// U_ν = Σ ε_n² c_n u_n / s_ν and Ū_ν = Σ c_n u_n on the basis grid.
    pub fn quasi_mode_functions(
        &self,
        basis: &ModeBasis,
    ) -> Result<Vec<QuasiModeFunctions>, QuasiModeError> {
        if basis.n_modes() != self.eps.len() {
            return Err(QuasiModeError::Length {
                expected: self.eps.len(),
                actual: basis.n_modes(),
            });
        }
        Ok(self
            .modes
            .iter()
            .map(|m| {
                let u_coeffs: Vec<C64> = m.left.iter().map(|l| l / m.norm).collect();
                QuasiModeFunctions {
                    right: basis.synthesize(&u_coeffs),
                    adjoint: basis.synthesize(m.right.as_slice()),
                }
            })
            .collect())
    }

    /// Quasi amplitudes A_ν = Σ c_n ε_n a_n / 𝔈_ν.
    pub fn project(&self, amplitudes: &DVector<C64>) -> Result<DVector<C64>, QuasiModeError> {
        self.ensure_complete()?;
        self.check_len(amplitudes.len())?;
        let mut out = DVector::zeros(self.modes.len());
        for (k, m) in self.modes.iter().enumerate() {
            let e = self.checked_vacuum_amplitude(k)?;
            out[k] = m.weighted.dot(amplitudes) / e;
        }
        Ok(out)
    }

    /// Inverse of [`Self::project`]: a_n = ε_n Σ_ν c_n^ν 𝔈_ν A_ν / s_ν.
    pub fn reconstruct(&self, quasi: &DVector<C64>) -> Result<DVector<C64>, QuasiModeError> {
        self.ensure_complete()?;
        self.check_len(quasi.len())?;
        let mut out = DVector::zeros(self.eps.len());
        for (k, m) in self.modes.iter().enumerate() {
            let e = self.checked_vacuum_amplitude(k)?;
            out += &m.weighted * (quasi[k] * e / m.norm);
        }
        Ok(out)
    }

    /// Exact mean evolution a(t) = Σ_ν b_ν e^{μ_ν t} (b_νᵀ a₀) / s_ν.
    pub fn propagate_amplitudes(
        &self,
        a0: &DVector<C64>,
        t: f64,
    ) -> Result<DVector<C64>, QuasiModeError> {
        self.ensure_complete()?;
        self.check_len(a0.len())?;
        let mut out = DVector::zeros(self.eps.len());
        for m in &self.modes {
            let weight = m.weighted.dot(a0) * (m.eigenvalue * t).exp() / m.norm;
            out += &m.weighted * weight;
        }
        Ok(out)
    }

    fn checked_vacuum_amplitude(&self, k: usize) -> Result<f64, QuasiModeError> {
        let frequency = self.modes[k].rates.frequency;
        if !(frequency > 0.0) {
            return Err(QuasiModeError::NonPositiveFrequency { mode: k, frequency });
        }
        Ok((0.5 * frequency).sqrt())
    }

    fn check_len(&self, actual: usize) -> Result<(), QuasiModeError> {
        if actual != self.eps.len() {
            return Err(QuasiModeError::Length {
                expected: self.eps.len(),
                actual,
            });
        }
        Ok(())
    }
}

/// K = ∫|U|² ∫|Ū|² / |∫U Ū|² under the grid quadrature.
pub fn petermann_k_integral(
    right: &[C64],
    adjoint: &[C64],
    grid: &SpatialGrid,
) -> Result<f64, BasisError> {
    let abs_r: Vec<f64> = right.iter().map(|v| v.norm_sqr()).collect();
    let abs_a: Vec<f64> = adjoint.iter().map(|v| v.norm_sqr()).collect();
    let overlap = crate::mode_basis::inner_product(right, adjoint, grid)?;
    Ok(grid.integrate(&abs_r)? * grid.integrate(&abs_a)? / overlap.norm_sqr())
}
