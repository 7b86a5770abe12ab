//! Semiclassical Langevin ensembles, Green-function field propagation and
//! the accumulated-noise closed forms they are checked against.
//!
//! Trajectories use symmetric-ordered c-number noise, ⟨ξ_m ξ̄_n⟩ = ½(L + Γ)_mn
//! and ⟨ξξ⟩ = 0, so ensemble averages of ā_n a_m estimate the symmetric
//! correlation matrix of [`crate::moments`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::mode_basis::{BasisError, ModeBasis, C64};
use crate::quasimodes::{DriftMatrix, QuasiModeError, QuasiModeSet};
use crate::reservoir::{profile_gram, RateProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LangevinError {
    #[error("diffusion matrix ½(L+Γ) is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },
    #[error("need at least 2 trajectories for a variance estimate, got {n_traj}")]
    TooFewTrajectories { n_traj: usize },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("sample times must be finite, nonnegative and nondecreasing (got {time})")]
    InvalidSampleTime { time: f64 },
    #[error("initial variance must be finite and nonnegative, got {0}")]
    InvalidInitialVariance(f64),
    #[error("expected length {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error(transparent)]
    QuasiModes(#[from] QuasiModeError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

pub type Result<T, E = LangevinError> = std::result::Result<T, E>;

/// Run parameters for [`simulate_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Requested sample times; each is rounded to the nearest step. The
    /// amplitude at a time that rounds to step 0 is the initial one.
    pub sample_times: Vec<f64>,
    /// Per-mode variance E|δa|² of circular Gaussian fluctuations added to
    /// `a0`. ½ samples the symmetric-order vacuum; 0 starts every trajectory
    /// at `a0` so only noise accumulated by the reservoirs is seen.
    pub initial_variance: f64,
}

impl EnsembleSettings {
    /// `n_samples + 1` equally spaced samples on [0, t_final].
    pub fn uniform(t_final: f64, dt: f64, n_samples: usize, n_traj: usize, seed: u64) -> Self {
        let n = n_samples.max(1);
        Self {
            dt,
            n_traj,
            seed,
            sample_times: (0..=n).map(|k| t_final * k as f64 / n as f64).collect(),
            initial_variance: 0.0,
        }
    }

    pub fn with_initial_variance(self, initial_variance: f64) -> Self {
        Self {
            initial_variance,
            ..self
        }
    }
}

/// Sampled trajectories. Amplitudes are stored trajectory-major:
/// `amplitude(j, k)` is the mode vector of trajectory `j` at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub n_modes: usize,
    pub seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    amplitudes: Vec<C64>,
}

impl TrajectoryEnsemble {
    pub fn amplitude(&self, traj: usize, sample: usize) -> &[C64] {
        let start = (traj * self.times.len() + sample) * self.n_modes;
        &self.amplitudes[start..start + self.n_modes]
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }
}

/// Factor F with F Fᵀ = ½(L + Γ), from the symmetric eigendecomposition.
fn noise_factor(drift: &DriftMatrix) -> Result<DMatrix<f64>> {
    let d = (drift.gain() + drift.loss()) * 0.5;
    let scale = d.amax().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(d);
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (r, &v) in roots.iter_mut().zip(eig.eigenvalues.iter()) {
        if v < -1e-12 * scale {
            return Err(LangevinError::NotPositiveSemidefinite { eigenvalue: v });
        }
        *r = v.max(0.0).sqrt();
    }
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Midpoint of the diagonal frequencies; the ensemble is stepped in the
/// frame rotating at this carrier so that dt only has to resolve detunings
/// and rates.
fn carrier_of(drift: &DriftMatrix) -> f64 {
    let w = drift.frequency_matrix().diagonal();
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        0.5 * (lo + hi)
    } else {
        0.0
    }
}

fn sample_steps(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut prev = 0usize;
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(LangevinError::InvalidSampleTime { time: t });
        }
        let k = (t / dt).round() as usize;
        if k < prev {
            return Err(LangevinError::InvalidSampleTime { time: t });
        }
        prev = k;
        steps.push(k);
    }
    Ok(steps)
}

/// Euler–Maruyama ensemble of the linear Langevin equation
/// da = [½(L − Γ) − iW] a dt + √dt ξ.
///
/// Trajectory `j` draws from ChaCha8 stream `j` of `seed`, so results do not
/// depend on the thread count.
pub fn simulate_ensemble(
    drift: &DriftMatrix,
    a0: &DVector<C64>,
    settings: &EnsembleSettings,
) -> Result<TrajectoryEnsemble> {
    let n = drift.dim();
    if a0.len() != n {
        return Err(LangevinError::Dimension {
            expected: n,
            actual: a0.len(),
        });
    }
    let dt = settings.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LangevinError::InvalidStep(dt));
    }
    let spread = settings.initial_variance;
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(LangevinError::InvalidInitialVariance(spread));
    }
    let spread = (0.5 * spread).sqrt();
    let steps = sample_steps(&settings.sample_times, dt)?;
    let times: Vec<f64> = steps.iter().map(|&k| k as f64 * dt).collect();
    let factor = noise_factor(drift)?;
    let carrier = carrier_of(drift);

    // row-major propagator for the rotating frame, one step of Euler
    let mut step = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut g = drift.generator()[(i, j)];
            if i == j {
                g += C64::new(0.0, carrier);
            }
            step[i * n + j] = g * dt;
        }
        step[i * n + i] += 1.0;
    }
    let noise: Vec<f64> = (0..n * n)
        .map(|k| factor[(k / n, k % n)] * dt.sqrt())
        .collect();
    let phases: Vec<C64> = times
        .iter()
        .map(|t| C64::new(0.0, -carrier * t).exp())
        .collect();

    let per_traj: Vec<Vec<C64>> = (0..settings.n_traj)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(j as u64);
            let mut a: Vec<C64> = a0.iter().copied().collect();
            if spread > 0.0 {
                for v in a.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *v += C64::new(re, im) * spread;
                }
            }
            let mut next = vec![C64::new(0.0, 0.0); n];
            let mut z = vec![C64::new(0.0, 0.0); n];
            let mut out = Vec::with_capacity(times.len() * n);
            let mut done = 0usize;
            for (&target, phase) in steps.iter().zip(&phases) {
                while done < target {
                    for zk in z.iter_mut() {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *zk = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                    }
                    for i in 0..n {
                        let mut acc = C64::new(0.0, 0.0);
                        for k in 0..n {
                            acc += step[i * n + k] * a[k] + z[k] * noise[i * n + k];
                        }
                        next[i] = acc;
                    }
                    std::mem::swap(&mut a, &mut next);
                    done += 1;
                }
                out.extend(a.iter().map(|v| v * phase));
            }
            out
        })
        .collect();

    Ok(TrajectoryEnsemble {
        n_traj: settings.n_traj,
        n_modes: n,
        seed: settings.seed,
        dt,
        times,
        amplitudes: per_traj.concat(),
    })
}

/// Sample statistics per sample time. `second[k][(n, m)]` estimates the
/// symmetric correlation ⟨ā_n a_m⟩; standard errors are given separately for
/// real and imaginary parts (packed as a complex number).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub mean: Vec<DVector<C64>>,
    pub mean_se: Vec<DVector<C64>>,
    pub second: Vec<DMatrix<C64>>,
    pub second_se: Vec<DMatrix<C64>>,
    pub covariance: Vec<DMatrix<C64>>,
}

fn split_se(sum: C64, sum_sq_re: f64, sum_sq_im: f64, count: f64) -> C64 {
    let mean = sum / count;
    let var_re = (sum_sq_re - count * mean.re * mean.re) / (count - 1.0);
    let var_im = (sum_sq_im - count * mean.im * mean.im) / (count - 1.0);
    C64::new(
        (var_re.max(0.0) / count).sqrt(),
        (var_im.max(0.0) / count).sqrt(),
    )
}

/// Unbiased ensemble statistics, accumulated in trajectory order.
pub fn ensemble_moments(ens: &TrajectoryEnsemble) -> Result<EnsembleMoments> {
    if ens.n_traj < 2 {
        return Err(LangevinError::TooFewTrajectories { n_traj: ens.n_traj });
    }
    let n = ens.n_modes;
    let count = ens.n_traj as f64;
    let mut out = EnsembleMoments {
        times: ens.times.clone(),
        mean: Vec::new(),
        mean_se: Vec::new(),
        second: Vec::new(),
        second_se: Vec::new(),
        covariance: Vec::new(),
    };
    for k in 0..ens.n_samples() {
        let mut s1 = DVector::<C64>::zeros(n);
        let mut s1_sq = vec![(0.0, 0.0); n];
        let mut s2 = DMatrix::<C64>::zeros(n, n);
        let mut s2_sq = vec![(0.0, 0.0); n * n];
        for j in 0..ens.n_traj {
            let a = ens.amplitude(j, k);
            for p in 0..n {
                s1[p] += a[p];
                s1_sq[p].0 += a[p].re * a[p].re;
                s1_sq[p].1 += a[p].im * a[p].im;
                for q in 0..n {
                    let x = a[p].conj() * a[q];
                    s2[(p, q)] += x;
                    s2_sq[p * n + q].0 += x.re * x.re;
                    s2_sq[p * n + q].1 += x.im * x.im;
                }
            }
        }
        let mean = &s1 / C64::new(count, 0.0);
        let mean_se = DVector::from_fn(n, |p, _| split_se(s1[p], s1_sq[p].0, s1_sq[p].1, count));
        let second = &s2 / C64::new(count, 0.0);
        let second_se = DMatrix::from_fn(n, n, |p, q| {
            let (re, im) = s2_sq[p * n + q];
            split_se(s2[(p, q)], re, im, count)
        });
        let covariance = DMatrix::from_fn(n, n, |p, q| {
            (s2[(p, q)] - s1[p].conj() * s1[q] / count) / (count - 1.0)
        });
        out.mean.push(mean);
        out.mean_se.push(mean_se);
        out.second.push(second);
        out.second_se.push(second_se);
        out.covariance.push(covariance);
    }
    Ok(out)
}

/// Positive-frequency field E⁺(x) = Σ_n ε_n a_n u_n(x) on the basis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub samples: Vec<C64>,
    pub t: f64,
}

impl FieldState {
    pub fn from_amplitudes(basis: &ModeBasis, amplitudes: &[C64], t: f64) -> Self {
        let coeffs: Vec<C64> = amplitudes
            .iter()
            .zip(basis.vacuum_amplitudes().iter())
            .map(|(a, e)| a * *e)
            .collect();
        Self {
            samples: basis.synthesize(&coeffs),
            t,
        }
    }

    /// Mode amplitudes a_n = ∫u_n E / ε_n.
    pub fn amplitudes(&self, basis: &ModeBasis) -> Result<Vec<C64>> {
        let coeffs = basis.analyze(&self.samples)?;
        Ok(coeffs
            .iter()
            .zip(basis.vacuum_amplitudes().iter())
            .map(|(c, e)| c / *e)
            .collect())
    }
}

/// Field propagation with G⁺(x, x′, t) = Σ_ν U_ν(x) Ū_ν(x′) e^{μ_ν t}.
#[derive(Debug, Clone)]
pub struct GreenPropagator<'a> {
    set: &'a QuasiModeSet,
    basis: &'a ModeBasis,
}

impl<'a> GreenPropagator<'a> {
    pub fn new(set: &'a QuasiModeSet, basis: &'a ModeBasis) -> Result<Self> {
        set.ensure_complete()?;
        if basis.n_modes() != set.len() {
            return Err(LangevinError::Dimension {
                expected: set.len(),
                actual: basis.n_modes(),
            });
        }
        Ok(Self { set, basis })
    }

    /// Projects onto Ū_ν (∫Ū_ν E = Σ c_n f_n with f_n = ∫u_n E) and resums
    /// with U_ν = Σ ε_n² c_n u_n / s_ν.
    pub fn propagate(&self, field: &FieldState, t: f64) -> Result<FieldState> {
        let f = self.basis.analyze(&field.samples)?;
        let eps = self.set.eps();
        let mut coeffs = vec![C64::new(0.0, 0.0); f.len()];
        for m in self.set.modes() {
            let overlap: C64 = m.right.iter().zip(&f).map(|(c, v)| c * v).sum();
            let weight = overlap * (m.eigenvalue * t).exp() / m.norm;
            for (n, out) in coeffs.iter_mut().enumerate() {
                *out += weight * m.right[n] * (eps[n] * eps[n]);
            }
        }
        Ok(FieldState {
            samples: self.basis.synthesize(&coeffs),
            t: field.t + t,
        })
    }
}

pub fn propagate_green(
    set: &QuasiModeSet,
    basis: &ModeBasis,
    field: &FieldState,
    t: f64,
) -> Result<FieldState> {
    GreenPropagator::new(set, basis)?.propagate(field, t)
}

/// (e^{zt} − 1)/z, continued to t at z = 0.
pub fn growth_kernel(z: C64, t: f64) -> C64 {
    let w = z * t;
    if w.norm() < 1e-4 {
        t * (1.0 + w / 2.0 + w * w / 6.0 + w * w * w / 24.0)
    } else {
        (w.exp() - 1.0) / z
    }
}

/// Position-averaged noise ∫(E⁺ + E⁻)² accumulated from vacuum.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVariance {
    /// Full double sum over quasi-mode pairs.
    pub full: f64,
    /// Diagonal single-mode approximation
    /// (ω̄/2)(λ_ν + γ_ν) K_ν (e^{(λ_ν−γ_ν)t} − 1)/(λ_ν − γ_ν), per mode.
    pub single_mode: Vec<f64>,
}

/// Precomputed overlaps for [`NoiseVariance`] evaluations at many times.
#[derive(Debug, Clone)]
pub struct AccumulatedNoise {
    omega_bar: f64,
    exponents: Vec<C64>,
    /// (ω̄/2) ∫U_ν U*_μ ∫Ū_ν R Ū*_μ
    weights: DMatrix<C64>,
    singles: Vec<(f64, f64, f64)>,
}

impl AccumulatedNoise {
    /// `total` is the superposed gain + loss density; the position rate is
    /// R(x) = (ω̄/2) ρ(x).
    pub fn new(set: &QuasiModeSet, basis: &ModeBasis, total: &RateProfile) -> Result<Self> {
        set.ensure_complete()?;
        if basis.n_modes() != set.len() {
            return Err(LangevinError::Dimension {
                expected: set.len(),
                actual: basis.n_modes(),
            });
        }
        let omega_bar = basis.band_center();
        let gram = profile_gram(basis, total).map(|v| C64::new(v, 0.0));
        let eps = set.eps();
        let modes = set.modes();
        let k = modes.len();
        let weights = DMatrix::from_fn(k, k, |nu, mu| {
            let (a, b) = (&modes[nu], &modes[mu]);
            // ∫U_ν U*_μ = Σ ε⁴ c_ν c̄_μ / (s_ν s̄_μ)
            let uu: C64 = (0..eps.len())
                .map(|n| a.right[n] * b.right[n].conj() * eps[n].powi(4))
                .sum::<C64>()
                / (a.norm * b.norm.conj());
            // ∫Ū_ν R Ū*_μ = (ω̄/2) c_νᵀ P c̄_μ
            let rr = (a.right.transpose() * &gram * b.right.map(|v| v.conj()))[(0, 0)]
                * (0.5 * omega_bar);
            uu * rr * (0.5 * omega_bar)
        });
        let singles = modes
            .iter()
            .map(|m| (m.rates.gain, m.rates.loss, m.petermann_k()))
            .collect();
        Ok(Self {
            omega_bar,
            exponents: modes.iter().map(|m| m.eigenvalue).collect(),
            weights,
            singles,
        })
    }

    pub fn omega_bar(&self) -> f64 {
        self.omega_bar
    }

    pub fn at(&self, t: f64) -> NoiseVariance {
        let k = self.exponents.len();
        let mut full = C64::new(0.0, 0.0);
        for nu in 0..k {
            for mu in 0..k {
                let z = self.exponents[nu] + self.exponents[mu].conj();
                full += self.weights[(nu, mu)] * growth_kernel(z, t);
            }
        }
        let single_mode = self
            .singles
            .iter()
            .map(|&(lambda, gamma, kf)| single_mode_noise(self.omega_bar, lambda, gamma, kf, t))
            .collect();
        NoiseVariance {
            full: full.re,
            single_mode,
        }
    }
}

/// (ω̄/2)(λ + γ) K (e^{(λ−γ)t} − 1)/(λ − γ).
pub fn single_mode_noise(omega_bar: f64, lambda: f64, gamma: f64, k: f64, t: f64) -> f64 {
    0.5 * omega_bar * (lambda + gamma) * k * growth_kernel(C64::new(lambda - gamma, 0.0), t).re
}

pub fn accumulated_noise_variance(
    set: &QuasiModeSet,
    basis: &ModeBasis,
    total: &RateProfile,
    t: f64,
) -> Result<NoiseVariance> {
    Ok(AccumulatedNoise::new(set, basis, total)?.at(t))
}

/// Position-averaged field noise ∫(E⁺ + E⁻)² = 2 Σ ε_n² (|a_n|² + Re a_n²)
/// of one trajectory sample.
pub fn field_noise(eps: &DVector<f64>, a: &[C64]) -> f64 {
    a.iter()
        .zip(eps.iter())
        .map(|(v, e)| 2.0 * e * e * (v.norm_sqr() + (v * v).re))
        .sum()
}

/// Monte-Carlo noise growth and the K recovered from it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrowth {
    pub times: Vec<f64>,
    pub mc_mean: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub single_mode: Vec<f64>,
    /// Index of the quasi mode with the largest net gain.
    pub dominant: usize,
    pub fitted_k: f64,
    pub fitted_k_se: f64,
}

/// Compares ensemble noise against the closed forms. Each trajectory's noise
/// series is least-squares fitted to the K = 1 single-mode curve of the
/// dominant quasi mode; the fitted K is the mean slope over trajectories.
pub fn noise_growth(
    ens: &TrajectoryEnsemble,
    set: &QuasiModeSet,
    basis: &ModeBasis,
    total: &RateProfile,
) -> Result<NoiseGrowth> {
    if ens.n_traj < 2 {
        return Err(LangevinError::TooFewTrajectories { n_traj: ens.n_traj });
    }
    let closed = AccumulatedNoise::new(set, basis, total)?;
    let dominant = set
        .modes()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.eigenvalue.re.total_cmp(&b.1.eigenvalue.re))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let rates = set.mode(dominant).rates;
    let reference: Vec<f64> = ens
        .times
        .iter()
        .map(|&t| single_mode_noise(closed.omega_bar(), rates.gain, rates.loss, 1.0, t))
        .collect();
    let ref_sq: f64 = reference.iter().map(|r| r * r).sum();
    let eps = basis.vacuum_amplitudes();
    let count = ens.n_traj as f64;

    let mut sum = vec![0.0; ens.n_samples()];
    let mut sum_sq = vec![0.0; ens.n_samples()];
    let mut k_sum = 0.0;
    let mut k_sq = 0.0;
    for j in 0..ens.n_traj {
        let mut dot = 0.0;
        for k in 0..ens.n_samples() {
            let y = field_noise(eps, ens.amplitude(j, k));
            sum[k] += y;
            sum_sq[k] += y * y;
            dot += y * reference[k];
        }
        let kj = dot / ref_sq;
        k_sum += kj;
        k_sq += kj * kj;
    }
    let se = |s: f64, sq: f64| {
        ((sq - s * s / count) / (count - 1.0) / count)
            .max(0.0)
            .sqrt()
    };
    let values: Vec<NoiseVariance> = ens.times.iter().map(|&t| closed.at(t)).collect();
    Ok(NoiseGrowth {
        times: ens.times.clone(),
        mc_mean: sum.iter().map(|s| s / count).collect(),
        mc_se: sum.iter().zip(&sum_sq).map(|(&s, &q)| se(s, q)).collect(),
        closed_form: values.iter().map(|v| v.full).collect(),
        single_mode: values.iter().map(|v| v.single_mode[dominant]).collect(),
        dominant,
        fitted_k: k_sum / count,
        fitted_k_se: se(k_sum, k_sq),
    })
}

/// Exact and flat-spectrum noise correlation kernels at lag τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HertzianKernel {
    /// sin(Δωτ/2) cos(ω̄τ) / (πτ)
    pub exact: f64,
    /// Δω cos(ω̄τ) / (2π)
    pub approx: f64,
}

impl HertzianKernel {
    /// |exact/approx − 1| = |sinc(Δωτ/2) − 1|, independent of the carrier.
    pub fn relative_deviation(delta_omega: f64, tau: f64) -> f64 {
        (sinc(0.5 * delta_omega * tau) - 1.0).abs()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn hertzian_kernel(delta_omega: f64, omega_bar: f64, tau: f64) -> HertzianKernel {
    let approx = delta_omega * (omega_bar * tau).cos() / (2.0 * std::f64::consts::PI);
    HertzianKernel {
        exact: approx * sinc(0.5 * delta_omega * tau),
        approx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasimodes::solve_quasimodes;
    use crate::reservoir::{CouplingMatrices, ReservoirKind, Segment};

    fn single_mode(gain: f64, loss: f64, omega: f64) -> DriftMatrix {
        DriftMatrix::from_parts(
            &DMatrix::from_element(1, 1, gain),
            &DMatrix::from_element(1, 1, loss),
            &DMatrix::from_element(1, 1, omega),
            &DVector::from_element(1, (0.5 * omega).sqrt()),
        )
        .unwrap()
    }

    fn separated() -> (ModeBasis, DriftMatrix, RateProfile) {
        let basis = ModeBasis::sine(3, 512, 20).unwrap();
        let gain =
            RateProfile::new(ReservoirKind::Gain, vec![Segment::new(0.0, 0.4, 0.08)]).unwrap();
        let loss =
            RateProfile::new(ReservoirKind::Loss, vec![Segment::new(0.4, 1.0, 0.05)]).unwrap();
        let m = CouplingMatrices::assemble(&basis, &gain, &loss).unwrap();
        let drift = DriftMatrix::build(&basis, &m.gain, &m.loss).unwrap();
        (basis, drift, gain.superpose(&loss))
    }

    #[test]
    fn closed_system_rotates_deterministically() {
        let d = single_mode(0.0, 0.0, 5.0);
        let a0 = DVector::from_element(1, C64::new(1.0, 0.0));
        let ens =
            simulate_ensemble(&d, &a0, &EnsembleSettings::uniform(1.0, 1e-3, 4, 5, 1)).unwrap();
        for j in 0..5 {
            for (k, t) in ens.times.iter().enumerate() {
                let expected = C64::new(0.0, -5.0 * t).exp();
                assert!((ens.amplitude(j, k)[0] - expected).norm() < 1e-12);
            }
        }
        let m = ensemble_moments(&ens).unwrap();
        assert!(m.covariance.iter().all(|c| c[(0, 0)].norm() < 1e-14));
    }

    #[test]
    fn initial_sample_is_exact() {
        let (_, drift, _) = separated();
        let a0 = DVector::from_vec(vec![
            C64::new(0.3, 0.1),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 2.0),
        ]);
        let ens =
            simulate_ensemble(&drift, &a0, &EnsembleSettings::uniform(0.1, 1e-3, 2, 8, 3)).unwrap();
        for j in 0..8 {
            assert_eq!(ens.amplitude(j, 0), a0.as_slice());
        }
        let m = ensemble_moments(&ens).unwrap();
        assert!((&m.mean[0] - &a0).norm() < 1e-15);
    }

    #[test]
    fn single_trajectory_has_no_variance_estimate() {
        let d = single_mode(0.0, 1.0, 1.0);
        let a0 = DVector::zeros(1);
        let ens =
            simulate_ensemble(&d, &a0, &EnsembleSettings::uniform(0.1, 1e-2, 1, 1, 0)).unwrap();
        assert_eq!(
            ensemble_moments(&ens).unwrap_err(),
            LangevinError::TooFewTrajectories { n_traj: 1 }
        );
    }

    #[test]
    fn indefinite_diffusion_is_rejected() {
        let gain = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 1.0, 0.1]);
        let d = DriftMatrix::from_parts(
            &gain,
            &DMatrix::zeros(2, 2),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            &DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let err = simulate_ensemble(
            &d,
            &DVector::zeros(2),
            &EnsembleSettings::uniform(0.1, 1e-2, 1, 4, 0),
        )
        .unwrap_err();
        match err {
            LangevinError::NotPositiveSemidefinite { eigenvalue } => {
                assert!((eigenvalue + 0.45).abs() < 1e-12)
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let (_, drift, _) = separated();
        let a0 = DVector::zeros(3);
        let s = EnsembleSettings::uniform(0.5, 1e-3, 5, 64, 42);
        let a = simulate_ensemble(&drift, &a0, &s).unwrap();
        let b = simulate_ensemble(&drift, &a0, &s).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&drift, &a0, &EnsembleSettings { seed: 43, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn green_identity_at_zero_and_eigenmode_growth() {
        let (basis, drift, _) = separated();
        let set = solve_quasimodes(&drift).unwrap();
        let g = GreenPropagator::new(&set, &basis).unwrap();
        let a = [C64::new(1.0, -0.5), C64::new(0.2, 0.0), C64::new(0.0, 0.7)];
        let e0 = FieldState::from_amplitudes(&basis, &a, 0.0);
        let same = g.propagate(&e0, 0.0).unwrap();
        let err = same
            .samples
            .iter()
            .zip(&e0.samples)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);

        let funcs = set.quasi_mode_functions(&basis).unwrap();
        for (nu, f) in funcs.iter().enumerate() {
            let u = FieldState {
                samples: f.right.clone(),
                t: 0.0,
            };
            let t = 0.7;
            let out = g.propagate(&u, t).unwrap();
            let growth = (set.mode(nu).eigenvalue * t).exp();
            let err = out
                .samples
                .iter()
                .zip(&f.right)
                .map(|(x, y)| (x - y * growth).norm())
                .fold(0.0, f64::max);
            let scale = f.right.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(
                err < 1e-9 * scale * growth.norm().max(1.0),
                "mode {nu}: {err}"
            );
        }
    }

    #[test]
    fn kernel_limit_is_linear_in_time() {
        assert!((growth_kernel(C64::new(0.0, 0.0), 2.5) - C64::new(2.5, 0.0)).norm() < 1e-15);
        let z = C64::new(1e-7, -2e-7);
        let series = growth_kernel(z, 3.0);
        let direct = ((z * 3.0).exp() - 1.0) / z;
        assert!((series - direct).norm() < 1e-8);
        let z = C64::new(0.3, -1.1);
        assert!((growth_kernel(z, 2.0) - ((z * 2.0).exp() - 1.0) / z).norm() < 1e-14);
    }

    #[test]
    fn single_mode_noise_limits() {
        // λ = γ: linear growth with slope (ω̄/2)(λ+γ)K
        let v = single_mode_noise(10.0, 0.3, 0.3, 2.0, 4.0);
        assert!((v - 5.0 * 0.6 * 2.0 * 4.0).abs() < 1e-12);
        let v = single_mode_noise(10.0, 0.5, 0.2, 1.5, 2.0);
        let expected = 5.0 * 0.7 * 1.5 * ((0.3f64 * 2.0).exp() - 1.0) / 0.3;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn hertzian_kernel_examples() {
        let k = hertzian_kernel(0.3, 50.0, 0.0);
        assert_eq!(k.exact, k.approx);
        assert!((k.approx - 0.3 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let dev = HertzianKernel::relative_deviation(0.3, 1.0 / 0.3);
        assert!((dev - (1.0 - 0.5f64.sin() / 0.5)).abs() < 1e-15);
        assert!(dev < 0.042);
        let tiny = hertzian_kernel(1e-12, 50.0, 2.0);
        assert!(tiny.exact.abs() < 1e-12 && tiny.approx.abs() < 1e-12);
    }

    #[test]
    fn hertzian_taylor_bound() {
        let (dw, wb) = (0.2, 40.0);
        for i in 1..50 {
            let tau = i as f64 / 50.0 / dw;
            let k = hertzian_kernel(dw, wb, tau);
            let bound =
                dw.powi(3) * tau * tau / (48.0 * std::f64::consts::PI) * (wb * tau).cos().abs();
            assert!((k.exact - k.approx).abs() <= bound * (1.0 + 1e-12));
        }
    }
}
