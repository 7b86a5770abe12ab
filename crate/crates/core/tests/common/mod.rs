#![allow(dead_code)]

use excess_noise::{
    solve_quasimodes, CouplingMatrices, DriftMatrix, ModeBasis, QuasiModeSet, RateProfile,
    ReservoirKind, Segment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Scenario {
    pub basis: ModeBasis,
    pub gain: RateProfile,
    pub loss: RateProfile,
    pub drift: DriftMatrix,
    pub set: QuasiModeSet,
}

impl Scenario {
    pub fn new(basis: ModeBasis, gain: RateProfile, loss: RateProfile) -> Self {
        let m = CouplingMatrices::assemble(&basis, &gain, &loss).unwrap();
        let drift = DriftMatrix::build(&basis, &m.gain, &m.loss).unwrap();
        let set = solve_quasimodes(&drift).unwrap();
        Self {
            basis,
            gain,
            loss,
            drift,
            set,
        }
    }

    pub fn total(&self) -> RateProfile {
        self.gain.superpose(&self.loss)
    }
}

pub fn profile(kind: ReservoirKind, segments: &[(f64, f64, f64)]) -> RateProfile {
    RateProfile::new(
        kind,
        segments
            .iter()
            .map(|&(a, b, d)| Segment::new(a, b, d))
            .collect(),
    )
    .unwrap()
}

/// Two modes at q₀ = 200, gain on the left half, loss on the right half.
pub fn standard_two_mode() -> Scenario {
    Scenario::new(
        ModeBasis::sine(2, 4096, 200).unwrap(),
        profile(ReservoirKind::Gain, &[(0.0, 0.5, 0.02)]),
        profile(ReservoirKind::Loss, &[(0.5, 1.0, 0.02)]),
    )
}

/// Three modes at q₀ = 20 with well separated quasi modes.
pub fn separated_three_mode() -> Scenario {
    Scenario::new(
        ModeBasis::sine(3, 512, 20).unwrap(),
        profile(ReservoirKind::Gain, &[(0.0, 0.4, 0.08)]),
        profile(ReservoirKind::Loss, &[(0.4, 1.0, 0.05)]),
    )
}

fn random_segments(rng: &mut ChaCha8Rng, max_density: f64) -> Vec<(f64, f64, f64)> {
    let mut cuts: Vec<f64> = (0..rng.random_range(1..=4) * 2)
        .map(|_| rng.random::<f64>())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.chunks(2)
        .filter(|c| c[1] > c[0])
        .map(|c| (c[0], c[1], rng.random::<f64>() * max_density))
        .collect()
}

/// Random basis size, offset and piecewise-constant profiles.
pub fn random_scenario(seed: u64, max_modes: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_modes);
    let q0 = rng.random_range(3..40);
    let grid = 8 * (q0 + n) + 1;
    Scenario::new(
        ModeBasis::sine(n, grid, q0).unwrap(),
        profile(ReservoirKind::Gain, &random_segments(&mut rng, 0.05)),
        profile(ReservoirKind::Loss, &random_segments(&mut rng, 0.05)),
    )
}
