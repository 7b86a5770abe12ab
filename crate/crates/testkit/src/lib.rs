//! Independent reference computations used by the test suites.
//!
//! Nothing here calls into the library under test: matrix exponentials come
//! from a Taylor series with scaling and squaring, eigenpairs from the
//! characteristic polynomial or from shifted inverse iteration, and moment
//! solutions from the scalar closed forms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

/// e^{A} by scaling and squaring with a degree-24 Taylor polynomial.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm: f64 = a.iter().map(|v| v.norm()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / C64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &scaled / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Characteristic polynomial coefficients p(z) = Σ c_k z^k (c_n = 1) by
/// Faddeev–LeVerrier.
pub fn characteristic_polynomial(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.nrows();
    let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
    coeffs[n] = C64::new(1.0, 0.0);
    let id = DMatrix::<C64>::identity(n, n);
    let mut m = DMatrix::<C64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n + 1 - k];
        let am = a * &m;
        coeffs[n - k] = -am.trace() / C64::new(k as f64, 0.0);
    }
    coeffs
}

/// All roots of a monic polynomial by Durand–Kerner iteration.
pub fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    let eval = |z: C64| {
        coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
    };
    let radius = 1.0 + coeffs[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..5000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 * radius {
            break;
        }
    }
    roots
}

/// Eigenvalues from the characteristic polynomial; only sensible for small,
/// well-scaled matrices.
pub fn eigenvalues_by_polynomial(a: &DMatrix<C64>) -> Vec<C64> {
    polynomial_roots(&characteristic_polynomial(a))
}

fn solve_repeatedly(m: &DMatrix<C64>, start: DVector<C64>, iterations: usize) -> DVector<C64> {
    let lu = m.clone().lu();
    let mut v = start;
    for _ in 0..iterations {
        v = match lu.solve(&v) {
            Some(x) => x,
            None => return v,
        };
        let norm = v.norm();
        v /= C64::new(norm, 0.0);
    }
    v
}

/// Eigenpair nearest `shift` by shift-invert iteration, with the eigenvalue
/// from the Rayleigh quotient.
pub fn inverse_iteration(a: &DMatrix<C64>, shift: C64, iterations: usize) -> (C64, DVector<C64>) {
    let n = a.nrows();
    let shifted = a - DMatrix::<C64>::identity(n, n) * shift;
    let start = DVector::from_fn(n, |i, _| {
        C64::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64)
    });
    let v = solve_repeatedly(&shifted, start, iterations);
    let lambda = (v.adjoint() * a * &v)[(0, 0)] / v.norm_squared();
    (lambda, v)
}

/// Left eigenvector (l^H A = μ l^H) nearest `shift`, from A^H.
pub fn left_inverse_iteration(a: &DMatrix<C64>, shift: C64, iterations: usize) -> DVector<C64> {
    let (_, l) = inverse_iteration(&a.adjoint(), shift.conj(), iterations);
    l
}

/// Petermann factor (‖l‖‖r‖ / |l^H r|)² of the eigenvalue nearest `shift`,
/// using only the general (non-symmetric) definition.
pub fn petermann_brute_force(a: &DMatrix<C64>, shift: C64) -> (C64, f64) {
    let (mu, r) = inverse_iteration(a, shift, 60);
    // offset so the shifted matrix is not exactly singular
    let offset = C64::new(1e-9, 1e-9) * (1.0 + mu.norm());
    let l = left_inverse_iteration(a, mu + offset, 60);
    let overlap = (l.adjoint() * &r)[(0, 0)].norm();
    (mu, (l.norm() * r.norm() / overlap).powi(2))
}

/// Residual ‖A v − μ v‖ / ‖v‖.
pub fn eigen_residual(a: &DMatrix<C64>, mu: C64, v: &DVector<C64>) -> f64 {
    (a * v - v * mu).norm() / v.norm()
}

/// Amplifier photon number from n₀: e^{λt}(n₀ + 1) − 1.
pub fn amplifier_photon_number(lambda: f64, n0: f64, t: f64) -> f64 {
    (lambda * t).exp() * (n0 + 1.0) - 1.0
}

/// Absorber photon number n₀ e^{−γt}.
pub fn absorber_photon_number(gamma: f64, n0: f64, t: f64) -> f64 {
    n0 * (-gamma * t).exp()
}

/// Symmetric-order ⟨|a|²⟩ of a single mode with gain λ and loss γ from
/// initial value v₀: dv/dt = (λ − γ)v + (λ + γ)/2.
pub fn single_mode_symmetric(lambda: f64, gamma: f64, v0: f64, t: f64) -> f64 {
    let r = lambda - gamma;
    let d = 0.5 * (lambda + gamma);
    if r.abs() < 1e-12 {
        v0 + d * t
    } else {
        (v0 + d / r) * (r * t).exp() - d / r
    }
}

/// Gaussian beam 1/e² radius with Rayleigh range ω̄w₀²/2.
pub fn gaussian_width(waist: f64, omega_bar: f64, z: f64) -> f64 {
    let z_r = 0.5 * omega_bar * waist * waist;
    waist * (1.0 + (z / z_r) * (z / z_r)).sqrt()
}

/// Largest entry-wise modulus of a complex matrix difference.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
