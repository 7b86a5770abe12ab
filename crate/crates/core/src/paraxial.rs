//! Paraxial propagation of a transverse envelope through gain/loss,
//!
//! ```text
//! c ∂_z Ẽ = { ½(R_L − R_Γ) + i c²/(2ω̄) ∇_T² } Ẽ,
//! ```
//!
//! and the transverse quasi modes of the discretized operator. Units have
//! c = 1 throughout.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode_basis::C64;
use crate::quasimodes::{solve_quasimodes, DriftMatrix, QuasiModeError, QuasiModeSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParaxialError {
    #[error("grid side must be a power of two ≥ 2, got {side}")]
    GridSide { side: usize },
    #[error("grid spacing must be positive and finite, got {0}")]
    Spacing(f64),
    #[error("carrier frequency must be positive and finite, got {0}")]
    Carrier(f64),
    #[error("profile has {actual} samples, expected {expected}")]
    ProfileLength { expected: usize, actual: usize },
    #[error("profile value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("field has {actual} samples, expected {expected}")]
    FieldLength { expected: usize, actual: usize },
    #[error("the separable route needs separable (or uniform) gain and loss profiles")]
    NotSeparable,
    #[error(transparent)]
    QuasiModes(#[from] QuasiModeError),
}

pub type Result<T, E = ParaxialError> = std::result::Result<T, E>;

/// Square grid of `side × side` points with spacing `spacing`, centred on
/// the axis: x_i = (i − side/2)·spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseGrid {
    side: usize,
    spacing: f64,
}

impl TransverseGrid {
    pub fn new(side: usize, spacing: f64) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(ParaxialError::GridSide { side });
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(ParaxialError::Spacing(spacing));
        }
        Ok(Self { side, spacing })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.side / 2) as f64) * self.spacing
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.side).map(|i| self.coordinate(i)).collect()
    }

    /// Angular spatial frequencies in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.side as i64;
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * self.spacing);
        (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else {
                    (j - n) as f64 * dk
                }
            })
            .collect()
    }
}

/// Transverse rate profile R(x, y). `Separable` stores R = f(x) + g(y), which
/// keeps the transverse operator a Kronecker sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransverseProfile {
    Uniform {
        value: f64,
    },
    Separable {
        x: Vec<f64>,
        y: Vec<f64>,
    },
    /// Row-major samples, index = iy·side + ix.
    Sampled {
        values: Vec<f64>,
    },
}

impl TransverseProfile {
    pub fn zero() -> Self {
        TransverseProfile::Uniform { value: 0.0 }
    }

    /// `left` for x < 0, `right` for x ≥ 0, independent of y.
    pub fn half_plane(grid: &TransverseGrid, left: f64, right: f64) -> Self {
        let x = grid
            .coordinates()
            .into_iter()
            .map(|x| if x < 0.0 { left } else { right })
            .collect();
        TransverseProfile::Separable {
            x,
            y: vec![0.0; grid.side()],
        }
    }

    pub fn validate(&self, grid: &TransverseGrid) -> Result<()> {
        let check = |v: &[f64], expected: usize| -> Result<()> {
            if v.len() != expected {
                return Err(ParaxialError::ProfileLength {
                    expected,
                    actual: v.len(),
                });
            }
            match v.iter().position(|x| !x.is_finite()) {
                Some(index) => Err(ParaxialError::NonFinite { index }),
                None => Ok(()),
            }
        };
        match self {
            TransverseProfile::Uniform { value } => check(&[*value], 1),
            TransverseProfile::Separable { x, y } => {
                check(x, grid.side())?;
                check(y, grid.side())
            }
            TransverseProfile::Sampled { values } => check(values, grid.len()),
        }
    }

    pub fn values(&self, grid: &TransverseGrid) -> Vec<f64> {
        let n = grid.side();
        match self {
            TransverseProfile::Uniform { value } => vec![*value; grid.len()],
            TransverseProfile::Separable { x, y } => {
                (0..grid.len()).map(|k| x[k % n] + y[k / n]).collect()
            }
            TransverseProfile::Sampled { values } => values.clone(),
        }
    }

    /// (f, g) with R = f(x) + g(y), or `None` for sampled profiles.
    pub fn axis_parts(&self, grid: &TransverseGrid) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = grid.side();
        match self {
            TransverseProfile::Uniform { value } => Some((vec![*value; n], vec![0.0; n])),
            TransverseProfile::Separable { x, y } => Some((x.clone(), y.clone())),
            TransverseProfile::Sampled { .. } => None,
        }
    }
}

/// Slowly varying envelope Ẽ on the transverse grid at position `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseField {
    pub grid: TransverseGrid,
    /// Row-major, index = iy·side + ix.
    pub samples: Vec<C64>,
    pub z: f64,
    pub omega_bar: f64,
}

impl TransverseField {
    pub fn new(grid: TransverseGrid, samples: Vec<C64>, omega_bar: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(ParaxialError::FieldLength {
                expected: grid.len(),
                actual: samples.len(),
            });
        }
        if !(omega_bar > 0.0 && omega_bar.is_finite()) {
            return Err(ParaxialError::Carrier(omega_bar));
        }
        Ok(Self {
            grid,
            samples,
            z: 0.0,
            omega_bar,
        })
    }

    /// Ẽ = exp(−r²/w₀²) at its waist.
    pub fn gaussian(grid: TransverseGrid, waist: f64, omega_bar: f64) -> Result<Self> {
        let xs = grid.coordinates();
        let n = grid.side();
        let samples = (0..grid.len())
            .map(|k| {
                let r2 = xs[k % n].powi(2) + xs[k / n].powi(2);
                C64::new((-r2 / (waist * waist)).exp(), 0.0)
            })
            .collect();
        Self::new(grid, samples, omega_bar)
    }

    /// ∫|Ẽ|² dx dy.
    pub fn power(&self) -> f64 {
        let h = self.grid.spacing();
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() * h * h
    }

    /// Beam widths (w_x, w_y) = 2√⟨(x − x̄)²⟩ of the intensity; equal to the
    /// 1/e² radius w for a Gaussian.
    pub fn rms_width(&self) -> (f64, f64) {
        let n = self.grid.side();
        let xs = self.grid.coordinates();
        let total: f64 = self.samples.iter().map(|v| v.norm_sqr()).sum();
        let moment = |axis: fn(usize, usize) -> usize| {
            let mean = self
                .samples
                .iter()
                .enumerate()
                .map(|(k, v)| xs[axis(k, n)] * v.norm_sqr())
                .sum::<f64>()
                / total;
            let var = self
                .samples
                .iter()
                .enumerate()
                .map(|(k, v)| (xs[axis(k, n)] - mean).powi(2) * v.norm_sqr())
                .sum::<f64>()
                / total;
            2.0 * var.sqrt()
        };
        (moment(|k, n| k % n), moment(|k, n| k / n))
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Gaussian-beam width w₀√(1 + (z/z_R)²) with z_R = ω̄w₀²/2.
pub fn gaussian_beam_width(waist: f64, omega_bar: f64, z: f64) -> f64 {
    let z_r = 0.5 * omega_bar * waist * waist;
    waist * (1.0 + (z / z_r).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWarning {
    pub dz: f64,
    pub limit: f64,
}

impl std::fmt::Display for StepWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step dz = {:.3e} exceeds the split-step guide {:.3e}",
            self.dz, self.limit
        )
    }
}

/// Guide h²ω̄/(2π) for the split-step increment.
pub fn step_limit(grid: &TransverseGrid, omega_bar: f64) -> f64 {
    grid.spacing().powi(2) * omega_bar / (2.0 * std::f64::consts::PI)
}

/// Symmetric split-step propagator for a fixed grid, profile pair and dz:
/// half gain/loss multiply, diffraction in the spectral domain, half
/// gain/loss multiply.
pub struct Propagator {
    grid: TransverseGrid,
    dz: f64,
    half_gain: Vec<f64>,
    diffraction: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    warning: Option<StepWarning>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("dz", &self.dz)
            .finish_non_exhaustive()
    }
}

impl Propagator {
    pub fn new(
        grid: TransverseGrid,
        gain: &TransverseProfile,
        loss: &TransverseProfile,
        omega_bar: f64,
        dz: f64,
    ) -> Result<Self> {
        if !(dz > 0.0 && dz.is_finite()) {
            return Err(ParaxialError::InvalidStep(dz));
        }
        if !(omega_bar > 0.0 && omega_bar.is_finite()) {
            return Err(ParaxialError::Carrier(omega_bar));
        }
        gain.validate(&grid)?;
        loss.validate(&grid)?;
        let half_gain = gain
            .values(&grid)
            .iter()
            .zip(loss.values(&grid))
            .map(|(l, g)| ((l - g) * dz / 4.0).exp())
            .collect();
        let k = grid.wavenumbers();
        let n = grid.side();
        let scale = 1.0 / grid.len() as f64;
        let diffraction = (0..grid.len())
            .map(|idx| {
                let k2 = k[idx % n].powi(2) + k[idx / n].powi(2);
                C64::new(0.0, -k2 * dz / (2.0 * omega_bar)).exp() * scale
            })
            .collect();
        let mut planner = FftPlanner::new();
        let limit = step_limit(&grid, omega_bar);
        Ok(Self {
            grid,
            dz,
            half_gain,
            diffraction,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            warning: (dz > limit).then_some(StepWarning { dz, limit }),
        })
    }

    pub fn warning(&self) -> Option<StepWarning> {
        self.warning
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    fn fft2(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.side();
        plan.process(data);
        let mut column = vec![C64::new(0.0, 0.0); n];
        for ix in 0..n {
            for (iy, c) in column.iter_mut().enumerate() {
                *c = data[iy * n + ix];
            }
            plan.process(&mut column);
            for (iy, c) in column.iter().enumerate() {
                data[iy * n + ix] = *c;
            }
        }
    }

    pub fn step(&self, field: &mut TransverseField) -> Result<()> {
        if field.samples.len() != self.grid.len() {
            return Err(ParaxialError::FieldLength {
                expected: self.grid.len(),
                actual: field.samples.len(),
            });
        }
        for (v, g) in field.samples.iter_mut().zip(&self.half_gain) {
            *v *= g;
        }
        self.fft2(&mut field.samples, &self.forward);
        for (v, d) in field.samples.iter_mut().zip(&self.diffraction) {
            *v *= d;
        }
        self.fft2(&mut field.samples, &self.inverse);
        for (v, g) in field.samples.iter_mut().zip(&self.half_gain) {
            *v *= g;
        }
        field.z += self.dz;
        Ok(())
    }

    pub fn advance(&self, field: &mut TransverseField, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(field)?;
        }
        Ok(())
    }
}

/// One split step; builds a fresh [`Propagator`], so prefer that type for
/// repeated steps.
pub fn paraxial_step(
    field: &TransverseField,
    gain: &TransverseProfile,
    loss: &TransverseProfile,
    dz: f64,
) -> Result<(TransverseField, Option<StepWarning>)> {
    let p = Propagator::new(field.grid, gain, loss, field.omega_bar, dz)?;
    let mut out = field.clone();
    p.step(&mut out)?;
    Ok((out, p.warning()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Kronecker-sum decomposition into two 1D problems.
    Separable,
    /// Full n² × n² eigenproblem.
    Dense,
}

/// W = −(1/2ω̄) ∂² along one axis with the 3-point stencil.
pub fn axis_frequency_matrix(
    side: usize,
    spacing: f64,
    omega_bar: f64,
    boundary: Boundary,
) -> DMatrix<f64> {
    let s = 1.0 / (2.0 * omega_bar * spacing * spacing);
    let mut w = DMatrix::zeros(side, side);
    for i in 0..side {
        w[(i, i)] = 2.0 * s;
        if i + 1 < side {
            w[(i, i + 1)] = -s;
            w[(i + 1, i)] = -s;
        }
    }
    if boundary == Boundary::Periodic && side > 2 {
        w[(0, side - 1)] = -s;
        w[(side - 1, 0)] = -s;
    }
    w
}

/// Drift matrix of the transverse operator ½(R_L − R_Γ) − iW on one axis,
/// with unit amplitude weights.
pub fn axis_drift(
    gain: &[f64],
    loss: &[f64],
    spacing: f64,
    omega_bar: f64,
    boundary: Boundary,
) -> Result<DriftMatrix> {
    let n = gain.len();
    let w = axis_frequency_matrix(n, spacing, omega_bar, boundary);
    Ok(DriftMatrix::from_parts(
        &DMatrix::from_diagonal(&DVector::from_column_slice(gain)),
        &DMatrix::from_diagonal(&DVector::from_column_slice(loss)),
        &w,
        &DVector::from_element(n, 1.0),
    )?)
}

/// Full-grid drift matrix with the 5-point Laplacian (row-major ordering).
pub fn dense_drift(
    grid: &TransverseGrid,
    gain: &TransverseProfile,
    loss: &TransverseProfile,
    omega_bar: f64,
    boundary: Boundary,
) -> Result<DriftMatrix> {
    gain.validate(grid)?;
    loss.validate(grid)?;
    let n = grid.side();
    let w1 = axis_frequency_matrix(n, grid.spacing(), omega_bar, boundary);
    let id = DMatrix::<f64>::identity(n, n);
    let w = id.kronecker(&w1) + w1.kronecker(&id);
    let diag = |p: &TransverseProfile| DMatrix::from_diagonal(&DVector::from_vec(p.values(grid)));
    Ok(DriftMatrix::from_parts(
        &diag(gain),
        &diag(loss),
        &w,
        &DVector::from_element(grid.len(), 1.0),
    )?)
}

/// One transverse quasi mode. For the separable route `axes` holds the
/// indices of the x and y factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMode {
    pub eigenvalue: C64,
    pub frequency: f64,
    pub petermann_k: f64,
    pub axes: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub enum TransverseQuasiModes {
    Separable {
        x: QuasiModeSet,
        y: QuasiModeSet,
        modes: Vec<TransverseMode>,
    },
    Dense {
        set: QuasiModeSet,
        modes: Vec<TransverseMode>,
    },
}

impl TransverseQuasiModes {
    /// Modes ordered by frequency shift, then by decreasing net gain.
    pub fn modes(&self) -> &[TransverseMode] {
        match self {
            TransverseQuasiModes::Separable { modes, .. }
            | TransverseQuasiModes::Dense { modes, .. } => modes,
        }
    }

    /// Coefficient vector c on the grid (row-major), Σ|c|² = 1.
    pub fn vector(&self, index: usize) -> DVector<C64> {
        match self {
            TransverseQuasiModes::Separable { x, y, modes } => {
                let (ix, iy) = modes[index]
                    .axes
                    .expect("separable modes carry axis indices");
                y.mode(iy).right.kronecker(&x.mode(ix).right)
            }
            TransverseQuasiModes::Dense { set, modes } => {
                let target = modes[index].eigenvalue;
                let m = set
                    .modes()
                    .iter()
                    .find(|m| m.eigenvalue == target)
                    .expect("mode list mirrors the set");
                m.right.clone()
            }
        }
    }
}

fn order_modes(modes: &mut [TransverseMode]) {
    modes.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(b.eigenvalue.re.total_cmp(&a.eigenvalue.re))
    });
}

/// Transverse quasi modes of ½(R_L − R_Γ) − iW with W = −(1/2ω̄)∇²_h.
///
/// The separable route solves the two axis problems and combines them:
/// μ = μ_x + μ_y, c = c_y ⊗ c_x and K = K_x K_y (both the Hermitian and the
/// bilinear norm factorize over a Kronecker product).
pub fn transverse_quasimodes(
    gain: &TransverseProfile,
    loss: &TransverseProfile,
    grid: &TransverseGrid,
    omega_bar: f64,
    boundary: Boundary,
    route: Route,
) -> Result<TransverseQuasiModes> {
    if !(omega_bar > 0.0 && omega_bar.is_finite()) {
        return Err(ParaxialError::Carrier(omega_bar));
    }
    gain.validate(grid)?;
    loss.validate(grid)?;
    match route {
        Route::Separable => {
            let (gx, gy) = gain.axis_parts(grid).ok_or(ParaxialError::NotSeparable)?;
            let (lx, ly) = loss.axis_parts(grid).ok_or(ParaxialError::NotSeparable)?;
            let h = grid.spacing();
            let x = solve_quasimodes(&axis_drift(&gx, &lx, h, omega_bar, boundary)?)?;
            let y = solve_quasimodes(&axis_drift(&gy, &ly, h, omega_bar, boundary)?)?;
            let mut modes = Vec::with_capacity(x.len() * y.len());
            for (iy, my) in y.modes().iter().enumerate() {
                for (ix, mx) in x.modes().iter().enumerate() {
                    modes.push(TransverseMode {
                        eigenvalue: mx.eigenvalue + my.eigenvalue,
                        frequency: mx.rates.frequency + my.rates.frequency,
                        petermann_k: mx.petermann_k() * my.petermann_k(),
                        axes: Some((ix, iy)),
                    });
                }
            }
            order_modes(&mut modes);
            Ok(TransverseQuasiModes::Separable { x, y, modes })
        }
        Route::Dense => {
            let set = solve_quasimodes(&dense_drift(grid, gain, loss, omega_bar, boundary)?)?;
            let mut modes: Vec<TransverseMode> = set
                .modes()
                .iter()
                .map(|m| TransverseMode {
                    eigenvalue: m.eigenvalue,
                    frequency: m.rates.frequency,
                    petermann_k: m.petermann_k(),
                    axes: None,
                })
                .collect();
            order_modes(&mut modes);
            Ok(TransverseQuasiModes::Dense { set, modes })
        }
    }
}
