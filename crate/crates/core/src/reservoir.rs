//! Gain and loss reservoirs and the coupling matrices they induce.
//!
//! A reservoir is a piecewise-constant rate density ρ(x) on the unit box. It
//! lumps the injection rate, the squared interaction time and the dipole
//! projection into one number, so that
//!
//! ```text
//! M_mn = ε_m ε_n ∫ ρ(x) u_m(x) u_n(x) dx
//! ```
//!
//! is the gain matrix `L` for a gain reservoir and the loss matrix `Γ` for a
//! loss reservoir.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode_basis::ModeBasis;
use crate::quadrature::composite_rule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("segment {index} [{x_min}, {x_max}) is empty or reversed")]
    EmptySegment {
        index: usize,
        x_min: f64,
        x_max: f64,
    },
    #[error("segment {index} [{x_min}, {x_max}) leaves the unit box")]
    OutOfBox {
        index: usize,
        x_min: f64,
        x_max: f64,
    },
    #[error(
        "segment {index} has invalid density {density}; densities must be finite and nonnegative"
    )]
    InvalidDensity { index: usize, density: f64 },
    #[error("segments {first} [{first_min}, {first_max}) and {second} [{second_min}, {second_max}) overlap")]
    Overlap {
        first: usize,
        first_min: f64,
        first_max: f64,
        second: usize,
        second_min: f64,
        second_max: f64,
    },
    #[error("expected a {expected:?} profile, got {actual:?}")]
    WrongKind {
        expected: ReservoirKind,
        actual: ReservoirKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservoirKind {
    Gain,
    Loss,
}

/// Constant density on the closed-open interval `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x_min: f64,
    pub x_max: f64,
    pub density: f64,
}

impl Segment {
    pub fn new(x_min: f64, x_max: f64, density: f64) -> Self {
        Self {
            x_min,
            x_max,
            density,
        }
    }

    fn contains(&self, x: f64) -> bool {
        (self.x_min <= x && x < self.x_max) || (x == 1.0 && self.x_max == 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    kind: ReservoirKind,
    segments: Vec<Segment>,
}

impl RateProfile {
    pub fn new(kind: ReservoirKind, segments: Vec<Segment>) -> Result<Self, ProfileError> {
        let profile = Self { kind, segments };
        let errors = profile.validation_errors();
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(profile),
        }
    }

    pub fn empty(kind: ReservoirKind) -> Self {
        Self {
            kind,
            segments: Vec::new(),
        }
    }

    /// Density `density` over the whole box.
    pub fn uniform(kind: ReservoirKind, density: f64) -> Result<Self, ProfileError> {
        Self::new(kind, vec![Segment::new(0.0, 1.0, density)])
    }

    pub fn kind(&self) -> ReservoirKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Every problem with the segment list, not just the first.
    pub fn validation_errors(&self) -> Vec<ProfileError> {
        validate_segments(&self.segments)
    }

    /// Lumped density ρ(x); zero outside all segments.
    pub fn density_at(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| s.contains(x))
            .map_or(0.0, |s| s.density)
    }

    /// Pointwise sum of two profiles, re-cut into non-overlapping segments.
    /// The result keeps the kind of `self`.
    pub fn superpose(&self, other: &RateProfile) -> RateProfile {
        let mut cuts: Vec<f64> = self
            .segments
            .iter()
            .chain(&other.segments)
            .flat_map(|s| [s.x_min, s.x_max])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut segments = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let density = self.density_at(mid) + other.density_at(mid);
            if density > 0.0 {
                segments.push(Segment::new(w[0], w[1], density));
            }
        }
        RateProfile {
            kind: self.kind,
            segments,
        }
    }
}

/// Checks a segment list against the profile invariants.
pub fn validate_segments(segments: &[Segment]) -> Vec<ProfileError> {
    let mut errors = Vec::new();
    for (index, s) in segments.iter().enumerate() {
        if !(s.x_min < s.x_max) {
            errors.push(ProfileError::EmptySegment {
                index,
                x_min: s.x_min,
                x_max: s.x_max,
            });
        } else if s.x_min < 0.0 || s.x_max > 1.0 {
            errors.push(ProfileError::OutOfBox {
                index,
                x_min: s.x_min,
                x_max: s.x_max,
            });
        }
        if !s.density.is_finite() || s.density < 0.0 {
            errors.push(ProfileError::InvalidDensity {
                index,
                density: s.density,
            });
        }
    }
    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            let (a, b) = (&segments[i], &segments[j]);
            if a.x_min < b.x_max && b.x_min < a.x_max {
                errors.push(ProfileError::Overlap {
                    first: i,
                    first_min: a.x_min,
                    first_max: a.x_max,
                    second: j,
                    second_min: b.x_min,
                    second_max: b.x_max,
                });
            }
        }
    }
    errors
}

const GL_ORDER: usize = 12;

/// Density-weighted Gram matrix P_mn = ∫ ρ u_m u_n, without the ε factors.
///
/// Each segment is integrated separately with a composite Gauss–Legendre
/// rule using the analytic mode functions, so the profile jumps never fall
/// inside a panel.
pub fn profile_gram(basis: &ModeBasis, profile: &RateProfile) -> DMatrix<f64> {
    let n = basis.n_modes();
    let mut gram = DMatrix::zeros(n, n);
    let max_mode = basis.mode_number(n - 1) as f64;
    for seg in profile.segments() {
        if seg.density == 0.0 {
            continue;
        }
        // about four panels per half-wave of the fastest product term
        let panels = ((seg.x_max - seg.x_min) * 8.0 * max_mode).ceil() as usize + 1;
        let (nodes, weights) = composite_rule(seg.x_min, seg.x_max, panels, GL_ORDER);
        let values = DMatrix::from_fn(n, nodes.len(), |m, k| basis.eval(m, nodes[k]));
        let weighted = DMatrix::from_fn(n, nodes.len(), |m, k| {
            values[(m, k)] * weights[k] * seg.density
        });
        gram += weighted * values.transpose();
    }
    symmetrize(&gram)
}

/// M_mn = ε_m ε_n ∫ ρ u_m u_n for the given profile.
pub fn coupling_matrix(basis: &ModeBasis, profile: &RateProfile) -> DMatrix<f64> {
    let eps = basis.vacuum_amplitudes();
    let d = DMatrix::from_diagonal(eps);
    symmetrize(&(&d * profile_gram(basis, profile) * &d))
}

/// Position-space rate R(x) = (ω̄/2) ρ(x), with ω̄ the band center.
pub fn position_rate(profile: &RateProfile, x: f64, omega_bar: f64) -> f64 {
    0.5 * omega_bar * profile.density_at(x)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Gain and loss matrices for one basis.
#[derive(Debug, Clone)]
pub struct CouplingMatrices {
    pub gain: DMatrix<f64>,
    pub loss: DMatrix<f64>,
    pub basis_id: u64,
}

impl CouplingMatrices {
    pub fn assemble(
        basis: &ModeBasis,
        gain: &RateProfile,
        loss: &RateProfile,
    ) -> Result<Self, ProfileError> {
        check_kind(gain, ReservoirKind::Gain)?;
        check_kind(loss, ReservoirKind::Loss)?;
        Ok(Self {
            gain: coupling_matrix(basis, gain),
            loss: coupling_matrix(basis, loss),
            basis_id: basis.id(),
        })
    }

    /// Diagonal of `L` and `Γ` as vectors, handy for single-mode checks.
    pub fn diagonals(&self) -> (DVector<f64>, DVector<f64>) {
        (self.gain.diagonal(), self.loss.diagonal())
    }
}

fn check_kind(profile: &RateProfile, expected: ReservoirKind) -> Result<(), ProfileError> {
    if profile.kind() != expected {
        return Err(ProfileError::WrongKind {
            expected,
            actual: profile.kind(),
        });
    }
    Ok(())
}
