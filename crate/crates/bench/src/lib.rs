//! Fixtures shared by the `kernels` benchmarks.

use rwre_core::rng::{env_seed, walk_seed};
use rwre_core::walk::run;
use rwre_core::{Environment, Site, SiteLaw, StopSpec, Trajectory};

pub const SEED: u64 = 0x5eed;

pub fn laws() -> Vec<(&'static str, SiteLaw)> {
    vec![
        ("uniform-2", SiteLaw::uniform(2)),
        ("dirichlet-3", SiteLaw::dirichlet_flat(3)),
        ("expl-2", SiteLaw::expl(2, 0.2)),
    ]
}

pub fn env(law: &SiteLaw, r: u64) -> Environment {
    Environment::new(law.clone(), env_seed(SEED, r)).expect("valid law")
}

/// A trajectory of the explicit law, long enough to hold many regenerations.
pub fn expl_trajectory(steps: u64) -> Trajectory {
    let e = env(&SiteLaw::expl(2, 0.2), 0);
    run(&e, Site::origin(2), &StopSpec::steps(steps).expect("positive budget"), walk_seed(SEED, 0, 0)).expect("walk runs")
}
