//! Orthonormal sine modes of a one-dimensional lossless "universe".
//!
//! Natural units throughout: ħ = ε₀ = c = 1 and the universe has unit length,
//! so the integration measure (1/V)∫dx is plain ∫₀¹dx. Mode `n` (zero based)
//! of a basis with offset `q₀` is
//!
//! ```text
//! u_n(x) = √2 sin((q₀ + n) π x),   ω_n = (q₀ + n) π,   ε_n = √(ω_n / 2)
//! ```

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rustfft::FftPlanner;
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("basis needs at least one mode")]
    NoModes,
    #[error("mode index offset q0 must be at least 1")]
    ZeroOffset,
    #[error("grid of {grid_points} points cannot resolve mode {mode_number} (sin({mode_number}πx)); need at least {required} points")]
    Resolution {
        mode_number: usize,
        grid_points: usize,
        required: usize,
    },
    #[error("grid function has {actual} samples but the grid has {expected} points")]
    Dimension { expected: usize, actual: usize },
    #[error("mode index {index} out of range for a basis of {n_modes} modes")]
    IndexOutOfRange { index: usize, n_modes: usize },
}

/// Uniform grid on [0, 1] with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SpatialGrid {
    /// `n_points` ≥ 2 equally spaced points including both walls.
    pub fn uniform(n_points: usize) -> Self {
        assert!(n_points >= 2, "a grid needs both walls");
        let h = 1.0 / (n_points - 1) as f64;
        let points = (0..n_points).map(|i| i as f64 * h).collect();
        let mut weights = vec![h; n_points];
        weights[0] = 0.5 * h;
        weights[n_points - 1] = 0.5 * h;
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    /// Trapezoid integral of a real grid function.
    pub fn integrate(&self, f: &[f64]) -> Result<f64, BasisError> {
        self.check_len(f.len())?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    fn check_len(&self, actual: usize) -> Result<(), BasisError> {
        if actual != self.len() {
            return Err(BasisError::Dimension {
                expected: self.len(),
                actual,
            });
        }
        Ok(())
    }
}

/// Unconjugated bilinear form Σ wᵢ f(xᵢ) g(xᵢ).
///
/// The biorthogonality of quasi modes is a statement about this form, not
/// about the Hermitian inner product, so no conjugate is taken.
pub fn inner_product<F, G>(f: &[F], g: &[G], grid: &SpatialGrid) -> Result<C64, BasisError>
where
    F: Copy + Into<C64>,
    G: Copy + Into<C64>,
{
    grid.check_len(f.len())?;
    grid.check_len(g.len())?;
    Ok(grid
        .weights
        .iter()
        .zip(f.iter().zip(g))
        .map(|(w, (a, b))| (*a).into() * (*b).into() * *w)
        .sum())
}

/// Sine modes of the unit box sampled on a [`SpatialGrid`].
#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: SpatialGrid,
    q0: usize,
    frequencies: DVector<f64>,
    vacuum_amplitudes: DVector<f64>,
    samples: DMatrix<f64>,
    id: u64,
}

impl ModeBasis {
    /// Builds `n_modes` modes starting at mode number `q0` on a grid of
    /// `grid_points` points. The grid must hold at least 8 points per
    /// half-wave of the fastest mode, counted as `8·(q0 + n_modes)`.
    pub fn sine(n_modes: usize, grid_points: usize, q0: usize) -> Result<Self, BasisError> {
        if n_modes == 0 {
            return Err(BasisError::NoModes);
        }
        if q0 == 0 {
            return Err(BasisError::ZeroOffset);
        }
        let required = 8 * (q0 + n_modes);
        if grid_points < required {
            return Err(BasisError::Resolution {
                mode_number: q0 + n_modes - 1,
                grid_points,
                required,
            });
        }
        let grid = SpatialGrid::uniform(grid_points);
        let frequencies = DVector::from_fn(n_modes, |n, _| (q0 + n) as f64 * PI);
        let vacuum_amplitudes = frequencies.map(|w| (0.5 * w).sqrt());
        let samples = DMatrix::from_fn(n_modes, grid_points, |n, i| {
            grid_mode_value(q0 + n, i, grid_points)
        });
        let id = basis_id(n_modes, grid_points, q0);
        Ok(Self {
            grid,
            q0,
            frequencies,
            vacuum_amplitudes,
            samples,
            id,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn mode_index_offset(&self) -> usize {
        self.q0
    }

    /// Number of half-waves of mode `n`; the mode has one less interior node.
    pub fn mode_number(&self, n: usize) -> usize {
        self.q0 + n
    }

    pub fn frequencies(&self) -> &DVector<f64> {
        &self.frequencies
    }

    pub fn vacuum_amplitudes(&self) -> &DVector<f64> {
        &self.vacuum_amplitudes
    }

    /// Identifier derived from (n_modes, grid_points, q0).
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Samples of u_n on the grid.
    pub fn mode(&self, n: usize) -> Vec<f64> {
        self.samples.row(n).iter().copied().collect()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// Analytic u_n(x), for quadrature off the grid.
    pub fn eval(&self, n: usize, x: f64) -> f64 {
        mode_value(self.q0 + n, x)
    }

    /// ε²-weighted mean frequency Σ ε_n² ω_n / Σ ε_n².
    pub fn band_center(&self) -> f64 {
        let num: f64 = self
            .frequencies
            .iter()
            .zip(self.vacuum_amplitudes.iter())
            .map(|(w, e)| e * e * w)
            .sum();
        let den: f64 = self.vacuum_amplitudes.iter().map(|e| e * e).sum();
        num / den
    }

    /// Spread of the band relative to its center, (ω_max − ω_min)/ω̄.
    pub fn relative_bandwidth(&self) -> f64 {
        let n = self.n_modes();
        (self.frequencies[n - 1] - self.frequencies[0]) / self.band_center()
    }

    /// Grid function Σ_n coeffs_n u_n(x).
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.n_modes());
        let mut out = vec![C64::new(0.0, 0.0); self.grid.len()];
        for (n, c) in coeffs.iter().enumerate() {
            for (o, u) in out.iter_mut().zip(self.samples.row(n).iter()) {
                *o += c * *u;
            }
        }
        out
    }

    /// Mode coefficients ∫u_n f of a grid function.
    pub fn analyze(&self, f: &[C64]) -> Result<Vec<C64>, BasisError> {
        self.grid.check_len(f.len())?;
        Ok((0..self.n_modes())
            .map(|n| {
                self.samples
                    .row(n)
                    .iter()
                    .zip(f)
                    .zip(&self.grid.weights)
                    .map(|((u, v), w)| v * (u * w))
                    .sum()
            })
            .collect())
    }

    /// Gram matrix ∫u_n u_m under the grid quadrature.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&self.grid.weights));
        &self.samples * w * self.samples.transpose()
    }

    /// Max-norm of (∂² + ω_n²)u_n over the interior grid points.
    pub fn helmholtz_residual(&self, n: usize) -> Result<f64, BasisError> {
        if n >= self.n_modes() {
            return Err(BasisError::IndexOutOfRange {
                index: n,
                n_modes: self.n_modes(),
            });
        }
        helmholtz_residual_samples(&self.grid, &self.mode(n), self.frequencies[n])
    }
}

fn mode_value(mode_number: usize, x: f64) -> f64 {
    SQRT_2 * (mode_number as f64 * PI * x).sin()
}

/// u at grid point `i` with the phase reduced in integers, so the sample
/// carries no argument rounding (which the spectral derivative would amplify).
fn grid_mode_value(mode_number: usize, i: usize, grid_points: usize) -> f64 {
    let period = 2 * (grid_points - 1);
    let phase = (mode_number * i) % period;
    SQRT_2 * (PI * phase as f64 / (grid_points - 1) as f64).sin()
}

fn basis_id(n_modes: usize, grid_points: usize, q0: usize) -> u64 {
    // FNV-1a over the defining triple
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in [n_modes as u64, grid_points as u64, q0 as u64] {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Helmholtz residual max|f'' + ω² f| over interior points of samples that
/// vanish at both walls. The second derivative is spectral, taken through the
/// odd periodic extension of the samples and restricted to wavenumbers below
/// a quarter of the grid's Nyquist limit.
pub fn helmholtz_residual_samples(
    grid: &SpatialGrid,
    samples: &[f64],
    omega: f64,
) -> Result<f64, BasisError> {
    grid.check_len(samples.len())?;
    let second = spectral_second_derivative(samples);
    Ok(samples[1..samples.len() - 1]
        .iter()
        .zip(&second[1..samples.len() - 1])
        .map(|(f, d)| (d + omega * omega * f).abs())
        .fold(0.0, f64::max))
}

fn spectral_second_derivative(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let period = 2 * (n - 1);
    let mut buf: Vec<C64> = Vec::with_capacity(period);
    buf.extend(samples.iter().map(|&v| C64::new(v, 0.0)));
    for j in (1..n - 1).rev() {
        buf.push(C64::new(-samples[j], 0.0));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(period);
    let inv = planner.plan_fft_inverse(period);
    fwd.process(&mut buf);
    // Extended period is 2 in x, so wavenumber k_m = π m. Bases resolve at
    // most m < n/8; the top three quarters of the spectrum only carry rounding
    // noise, which k² would amplify, so it is dropped.
    let cutoff = (n - 1) / 4;
    for (m, v) in buf.iter_mut().enumerate() {
        let signed = if m <= period / 2 {
            m as i64
        } else {
            m as i64 - period as i64
        };
        if signed.unsigned_abs() as usize > cutoff {
            *v = C64::new(0.0, 0.0);
            continue;
        }
        let k = PI * signed as f64;
        *v *= -k * k;
    }
    inv.process(&mut buf);
    let scale = 1.0 / period as f64;
    buf[..n].iter().map(|v| v.re * scale).collect()
}
