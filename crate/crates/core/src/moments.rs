//! First and second moments of the mode amplitudes.
//!
//! Correlation matrices are indexed so that all three orderings obey the same
//! equation of motion and differ only in their drive:
//!
//! | ordering   | `corr[(n, m)]`                 | drive       |
//! |------------|--------------------------------|-------------|
//! | normal     | ⟨a†_n a_m⟩                     | `L`         |
//! | antinormal | ⟨a_m a†_n⟩                     | `Γ`         |
//! | symmetric  | ½⟨a†_n a_m + a_m a†_n⟩         | `½(L + Γ)`  |
//!
//! ```text
//! dC/dt = K C + C K + i(W C − C W) + D,    K = ½(L − Γ)
//! ```
//!
//! so antinormal − normal = 1 is preserved. Anomalous moments ⟨a_n a_m⟩
//! evolve without drive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode_basis::C64;
use crate::quasimodes::{DriftMatrix, QuasiModeError, QuasiModeSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("correlation matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("expected dimension {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("sample times must be nondecreasing and nonnegative")]
    InvalidTimes,
    #[error(transparent)]
    QuasiModes(#[from] QuasiModeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    Normal,
    Antinormal,
    Symmetric,
}

impl Ordering {
    /// Offset of this ordering's correlation matrix relative to normal order.
    fn identity_offset(self) -> f64 {
        match self {
            Ordering::Normal => 0.0,
            Ordering::Antinormal => 1.0,
            Ordering::Symmetric => 0.5,
        }
    }
}

/// Reference frame for time stepping. In the rotating frame the amplitudes
/// are ã = e^{iω̄t} a, which removes the carrier from the step-size budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Rotating { omega_bar: f64 },
}

impl Frame {
    pub fn carrier(self) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::Rotating { omega_bar } => omega_bar,
        }
    }
}

/// Exact ⟨a⟩, correlation matrix and optional anomalous moments at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub t: f64,
    pub mean: DVector<C64>,
    pub corr: DMatrix<C64>,
    pub ordering: Ordering,
    /// ⟨a_n a_m⟩; `None` means identically zero.
    pub anomalous: Option<DMatrix<C64>>,
    pub basis_id: Option<u64>,
}

impl MomentState {
    pub fn vacuum(n: usize, ordering: Ordering) -> Self {
        Self {
            t: 0.0,
            mean: DVector::zeros(n),
            corr: DMatrix::identity(n, n) * C64::new(ordering.identity_offset(), 0.0),
            ordering,
            anomalous: None,
            basis_id: None,
        }
    }

    /// Product coherent state |α⟩.
    pub fn coherent(alpha: &DVector<C64>, ordering: Ordering) -> Self {
        let n = alpha.len();
        let outer = DMatrix::from_fn(n, n, |i, j| alpha[i].conj() * alpha[j]);
        Self {
            t: 0.0,
            mean: alpha.clone(),
            corr: outer + DMatrix::identity(n, n) * C64::new(ordering.identity_offset(), 0.0),
            ordering,
            anomalous: Some(DMatrix::from_fn(n, n, |i, j| alpha[i] * alpha[j])),
            basis_id: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same state expressed in another ordering (shift by a multiple of 1).
    pub fn to_ordering(&self, ordering: Ordering) -> Self {
        let shift = ordering.identity_offset() - self.ordering.identity_offset();
        let n = self.dim();
        Self {
            corr: &self.corr + DMatrix::identity(n, n) * C64::new(shift, 0.0),
            ordering,
            ..self.clone()
        }
    }

    /// Mean photon numbers ⟨a†_n a_n⟩.
    pub fn photon_numbers(&self) -> DVector<f64> {
        let normal = self.to_ordering(Ordering::Normal);
        normal.corr.diagonal().map(|v| v.re)
    }
}

/// Drive of the correlation equation: normal → L, antinormal → Γ,
/// symmetric → ½(L + Γ).
pub fn diffusion_matrix(
    gain: &DMatrix<f64>,
    loss: &DMatrix<f64>,
    ordering: Ordering,
) -> DMatrix<f64> {
    match ordering {
        Ordering::Normal => gain.clone(),
        Ordering::Antinormal => loss.clone(),
        Ordering::Symmetric => (gain + loss) * 0.5,
    }
}

/// Default RK4 step min(0.05/ω_max, 0.01/rate_max) for the mean equation in
/// the given frame.
pub fn default_step(drift: &DriftMatrix, frame: Frame) -> f64 {
    let omega = frequency_scale(drift, frame.carrier());
    step_from_scales(omega, drift.max_rate())
}

fn step_from_scales(omega: f64, rate: f64) -> f64 {
    let a = if omega > 0.0 {
        0.05 / omega
    } else {
        f64::INFINITY
    };
    let b = if rate > 0.0 {
        0.01 / rate
    } else {
        f64::INFINITY
    };
    let dt = a.min(b);
    if dt.is_finite() {
        dt
    } else {
        1.0
    }
}

/// Largest |ω_n − carrier|.
fn frequency_scale(drift: &DriftMatrix, carrier: f64) -> f64 {
    drift
        .frequency_matrix()
        .diagonal()
        .iter()
        .map(|w| (w - carrier).abs())
        .fold(0.0, f64::max)
}

/// Warning raised when an RK4 step exceeds 0.1/ω_max (mean equation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWarning {
    pub dt: f64,
    pub limit: f64,
}

impl std::fmt::Display for StepWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "time step {:.3e} exceeds the stability guide {:.3e}",
            self.dt, self.limit
        )
    }
}

pub fn check_step(drift: &DriftMatrix, dt: f64, frame: Frame) -> Option<StepWarning> {
    let omega = frequency_scale(drift, frame.carrier());
    let limit = if omega > 0.0 {
        0.1 / omega
    } else {
        f64::INFINITY
    };
    (dt > limit).then_some(StepWarning { dt, limit })
}

fn steps_for(span: f64, dt: f64) -> Result<(usize, f64), MomentError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MomentError::InvalidStep(dt));
    }
    if span <= 0.0 {
        return Ok((0, 0.0));
    }
    let n = (span / dt).ceil().max(1.0) as usize;
    Ok((n, span / n as f64))
}

fn rk4<T, F>(y: &mut T, h: f64, f: &F)
where
    T: Clone + std::ops::Add<T, Output = T> + std::ops::Mul<C64, Output = T>,
    F: Fn(&T) -> T,
{
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let k1 = f(y);
    let k2 = f(&(y.clone() + k1.clone() * half));
    let k3 = f(&(y.clone() + k2.clone() * half));
    let k4 = f(&(y.clone() + k3.clone() * full));
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    *y = y.clone() + (k1 + k2 * two + k3 * two + k4) * sixth;
}

/// Mean amplitudes at `t_final` by fixed-step RK4.
pub fn evolve_means_rk4(
    drift: &DriftMatrix,
    mean0: &DVector<C64>,
    t_final: f64,
    dt: f64,
    frame: Frame,
) -> Result<DVector<C64>, MomentError> {
    check_dim(drift.dim(), mean0.len())?;
    let carrier = frame.carrier();
    let n = drift.dim();
    let generator = drift.generator() + DMatrix::identity(n, n) * C64::new(0.0, carrier);
    let (steps, h) = steps_for(t_final, dt)?;
    let mut y = mean0.clone();
    for _ in 0..steps {
        rk4(&mut y, h, &|v: &DVector<C64>| &generator * v);
    }
    Ok(y * C64::new(0.0, -carrier * t_final).exp())
}

/// Mean amplitudes at `t` from the quasi-mode expansion, each A_ν growing as
/// e^{μ_ν t}.
pub fn evolve_means_exact(
    set: &QuasiModeSet,
    mean0: &DVector<C64>,
    t: f64,
) -> Result<DVector<C64>, MomentError> {
    Ok(set.propagate_amplitudes(mean0, t)?)
}

struct CorrelationRhs<'a> {
    net: DMatrix<C64>,
    frequency: &'a DMatrix<f64>,
    diagonal_w: Option<DVector<f64>>,
    drive: DMatrix<C64>,
}

impl<'a> CorrelationRhs<'a> {
    fn new(drift: &'a DriftMatrix, drive: &DMatrix<f64>) -> Self {
        Self {
            net: drift.net_rate().map(|v| C64::new(v, 0.0)),
            frequency: drift.frequency_matrix(),
            diagonal_w: drift
                .frequency_is_diagonal()
                .then(|| drift.frequency_matrix().diagonal()),
            drive: drive.map(|v| C64::new(v, 0.0)),
        }
    }

    fn commutator_term(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.diagonal_w {
            // i(ω_n − ω_m) C_nm, differenced first so the carrier cancels exactly
            Some(w) => DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
                c[(i, j)] * C64::new(0.0, w[i] - w[j])
            }),
            None => {
                let w = self.frequency.map(|v| C64::new(v, 0.0));
                (&w * c - c * &w) * C64::new(0.0, 1.0)
            }
        }
    }

    fn eval(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        &self.net * c + c * &self.net + self.commutator_term(c) + &self.drive
    }

    fn eval_anomalous(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        // d⟨a_n a_m⟩/dt = (G N + N G)_nm with G = K − iW
        let w = self.frequency.map(|v| C64::new(v, 0.0));
        let g = &self.net - w * C64::new(0.0, 1.0);
        &g * c + c * &g
    }
}

/// Correlation matrix at `t_final` for the given ordering.
pub fn evolve_correlations(
    drift: &DriftMatrix,
    corr0: &DMatrix<C64>,
    ordering: Ordering,
    t_final: f64,
    dt: f64,
) -> Result<DMatrix<C64>, MomentError> {
    let series = correlation_series(drift, corr0, ordering, &[t_final], dt)?;
    Ok(series.into_iter().next().expect("one sample requested"))
}

/// Correlation matrices at each of `times` (nondecreasing, from t = 0).
pub fn correlation_series(
    drift: &DriftMatrix,
    corr0: &DMatrix<C64>,
    ordering: Ordering,
    times: &[f64],
    dt: f64,
) -> Result<Vec<DMatrix<C64>>, MomentError> {
    check_dim(drift.dim(), corr0.nrows())?;
    check_dim(drift.dim(), corr0.ncols())?;
    check_hermitian(corr0)?;
    let drive = diffusion_matrix(drift.gain(), drift.loss(), ordering);
    let rhs = CorrelationRhs::new(drift, &drive);
    integrate_series(corr0.clone(), times, dt, |c| rhs.eval(c), true)
}

fn integrate_series<F>(
    start: DMatrix<C64>,
    times: &[f64],
    dt: f64,
    f: F,
    hermitian: bool,
) -> Result<Vec<DMatrix<C64>>, MomentError>
where
    F: Fn(&DMatrix<C64>) -> DMatrix<C64>,
{
    let mut now = 0.0;
    let mut c = start;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= now) {
            return Err(MomentError::InvalidTimes);
        }
        let (steps, h) = steps_for(t - now, dt)?;
        for _ in 0..steps {
            rk4(&mut c, h, &f);
        }
        if hermitian {
            // rounding only; the flow itself preserves Hermiticity
            c = (&c + c.adjoint()) * C64::new(0.5, 0.0);
        }
        now = t;
        out.push(c.clone());
    }
    Ok(out)
}

/// Evolves the whole state (mean, correlations, anomalous moments).
pub fn evolve_state(
    drift: &DriftMatrix,
    state: &MomentState,
    t_final: f64,
    dt: f64,
) -> Result<MomentState, MomentError> {
    check_dim(drift.dim(), state.dim())?;
    let span = t_final - state.t;
    let corr = evolve_correlations(drift, &state.corr, state.ordering, span, dt)?;
    let mean = evolve_means_rk4(drift, &state.mean, span, dt, Frame::Lab)?;
    let anomalous = match &state.anomalous {
        Some(n0) => {
            let drive = DMatrix::zeros(drift.dim(), drift.dim());
            let rhs = CorrelationRhs::new(drift, &drive);
            let out = integrate_series(n0.clone(), &[span], dt, |c| rhs.eval_anomalous(c), false)?;
            out.into_iter().next()
        }
        None => None,
    };
    Ok(MomentState {
        t: t_final,
        mean,
        corr,
        ordering: state.ordering,
        anomalous,
        basis_id: state.basis_id,
    })
}

/// Quasi-mode correlations ⟨A†_ν A_μ⟩ = (B^H C B)_νμ / (𝔈_ν 𝔈_μ), where the
/// columns of B are the generator eigenvectors b_ν = ε c^ν.
pub fn quasi_correlations(
    corr: &DMatrix<C64>,
    set: &QuasiModeSet,
) -> Result<DMatrix<C64>, MomentError> {
    set.ensure_complete()?;
    check_dim(set.eps().len(), corr.nrows())?;
    let b = set.weighted_matrix();
    let scales = vacuum_scales(set)?;
    let mut q = b.adjoint() * corr * &b;
    for i in 0..q.nrows() {
        for j in 0..q.ncols() {
            q[(i, j)] /= scales[i] * scales[j];
        }
    }
    Ok(q)
}

/// Drive of the quasi-mode correlation equation for an ordering,
/// (B^H D B)_νμ / (𝔈_ν 𝔈_μ).
pub fn quasi_drive(
    drift: &DriftMatrix,
    set: &QuasiModeSet,
    ordering: Ordering,
) -> Result<DMatrix<C64>, MomentError> {
    let d = diffusion_matrix(drift.gain(), drift.loss(), ordering).map(|v| C64::new(v, 0.0));
    quasi_correlations(&d, set)
}

fn vacuum_scales(set: &QuasiModeSet) -> Result<Vec<f64>, MomentError> {
    set.modes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let f = m.rates.frequency;
            if f > 0.0 {
                Ok((0.5 * f).sqrt())
            } else {
                Err(QuasiModeError::NonPositiveFrequency {
                    mode: k,
                    frequency: f,
                }
                .into())
            }
        })
        .collect()
}

/// Position-averaged variance of the quadrature X̂_ν = 𝔈_ν(U_ν A_ν + U*_ν A†_ν).
///
/// With b = ε c^ν and δa = a − ⟨a⟩,
///
/// ```text
/// Var = 2 ∫|U_ν|² · b^H ⟨δa† δa⟩_sym b  +  2 Re[ ∫U_ν² · bᵀ ⟨δa δa⟩ b ]
/// ```
///
/// where ∫|U_ν|² = Σ ε²|b|²/|s|² and ∫U_ν² = Σ ε² b²/s². The second term
/// vanishes when no anomalous moments are carried.
pub fn quadrature_variance(
    set: &QuasiModeSet,
    state: &MomentState,
    nu: usize,
) -> Result<f64, MomentError> {
    set.ensure_complete()?;
    check_dim(set.eps().len(), state.dim())?;
    let sym = state.to_ordering(Ordering::Symmetric);
    let mode = set.mode(nu);
    let b = &mode.weighted;
    let eps = set.eps();
    let s = mode.norm;
    let u_abs: f64 = b
        .iter()
        .zip(eps.iter())
        .map(|(v, e)| e * e * v.norm_sqr())
        .sum::<f64>()
        / s.norm_sqr();
    let u_sq: C64 = b
        .iter()
        .zip(eps.iter())
        .map(|(v, e)| v * v * (e * e))
        .sum::<C64>()
        / (s * s);

    let m = &sym.mean;
    let n = sym.dim();
    let central = DMatrix::from_fn(n, n, |i, j| sym.corr[(i, j)] - m[i].conj() * m[j]);
    let normal_part = (b.adjoint() * &central * b)[(0, 0)].re;
    let mut var = 2.0 * u_abs * normal_part;
    if let Some(anom) = &sym.anomalous {
        let central = DMatrix::from_fn(n, n, |i, j| anom[(i, j)] - m[i] * m[j]);
        let pair = (b.transpose() * &central * b)[(0, 0)];
        var += 2.0 * (u_sq * pair).re;
    }
    Ok(var)
}

fn check_dim(expected: usize, actual: usize) -> Result<(), MomentError> {
    if expected != actual {
        return Err(MomentError::Dimension { expected, actual });
    }
    Ok(())
}

fn check_hermitian(c: &DMatrix<C64>) -> Result<(), MomentError> {
    let deviation = (c - c.adjoint())
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let scale = c.iter().map(|v| v.norm()).fold(1.0, f64::max);
    if deviation > 1e-12 * scale {
        return Err(MomentError::NotHermitian { deviation });
    }
    Ok(())
}
