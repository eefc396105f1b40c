#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnpike_core::prelude::*;

pub fn unit() -> Interval {
    Interval::new(0.0, 1.0)
}

/// Whole-domain control and observation on `(0, 1)`.
pub fn spec(
    beta: f64,
    horizon: f64,
    initial: Profile,
    target: Profile,
    f: Nonlinearity,
) -> ProblemSpec {
    ProblemSpec {
        domain: unit(),
        control_region: unit(),
        observation_region: unit(),
        beta,
        horizon,
        target,
        initial,
        nonlinearity: f,
    }
}

pub fn problem(spec: &ProblemSpec, nx: usize, nt: usize) -> DiscreteProblem {
    DiscreteProblem::new(spec, DiscretizationSpec::new(nx, nt).unwrap()).unwrap()
}

/// Uniform random control in `[-amp, amp]` supported on the control mask.
pub fn random_control(p: &DiscreteProblem, rng: &mut ChaCha8Rng, amp: f64) -> Control {
    let w = p.control_mask.weights();
    let data: Vec<f64> = (0..p.nt() * p.nx())
        .map(|j| w[j % p.nx()] * rng.gen_range(-amp..amp))
        .collect();
    Control::from_values(p.nx(), p.nt(), data, &p.control_mask).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
