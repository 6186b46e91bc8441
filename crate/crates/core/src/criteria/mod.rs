//! Checkable ellipticity and ballisticity criteria.
//!
//! * [`discovery`]: marked Markovian hypercubes, discovered site by site
//!   through a view that refuses reads outside the revealed prefix.
//! * [`paths`]: the escape-path bundle and its attainability experiment.
//! * [`moments`]: `(E)_0`, `(E')_1`, `(K̃)_1` and `(K)_α`.
//! * [`effective`]: the polynomial box condition, slab backtrack
//!   probabilities and the tilted-box front exit.
//!
//! Nothing here proves a moment condition. Finiteness is read off Hill
//! tail-index confidence intervals and every verdict carries its evidence.

pub mod discovery;
pub mod effective;
pub mod moments;
pub mod paths;

use serde::Serialize;

use crate::environment::{Environment, Homogeneous, Medium, SiteLaw};
use crate::error::Result;
use crate::stats::{Interval, MomentVerdict};

pub use discovery::{discover, mark_sum, DiscoveryPolicy, DiscoveryStep, MarkedMarkovianHypercube, RevealedView};
pub use effective::{polynomial_condition, slab_exit, tilted_box_exit};
pub use moments::{moment_conditions, MomentSpec};
pub use paths::{attainability, paths, PathBundle};

/// A source of i.i.d. environments, one per replicate seed.
pub trait EnvSampler: Sync {
    type Env: Medium;
    fn dim(&self) -> usize;
    fn realize(&self, seed: u64) -> Result<Self::Env>;
}

impl EnvSampler for SiteLaw {
    type Env = Environment;
    fn dim(&self) -> usize {
        SiteLaw::dim(self)
    }
    fn realize(&self, seed: u64) -> Result<Environment> {
        Environment::new(self.clone(), seed)
    }
}

/// A degenerate law: the same vector everywhere, whatever the seed.
impl EnvSampler for Homogeneous {
    type Env = Homogeneous;
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn realize(&self, _: u64) -> Result<Homogeneous> {
        Ok(self.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SatisfiedEmpirically,
    ViolatedEmpirically,
    Inconclusive,
}

impl Verdict {
    /// Satisfied only if every part is; violated if any part is.
    pub fn all(parts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::SatisfiedEmpirically;
        for v in parts {
            match v {
                Verdict::ViolatedEmpirically => return Verdict::ViolatedEmpirically,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::SatisfiedEmpirically => {}
            }
        }
        out
    }

    /// A finite-moment requirement read off a moment verdict.
    pub fn from_finite(m: MomentVerdict) -> Verdict {
        match m {
            MomentVerdict::MomentAppearsFinite => Verdict::SatisfiedEmpirically,
            MomentVerdict::MomentAppearsInfinite => Verdict::ViolatedEmpirically,
            MomentVerdict::Inconclusive => Verdict::Inconclusive,
        }
    }
}

/// One reported quantity. `ci_low`/`ci_high` are `NaN` (JSON `null`) for
/// exact or purely descriptive values.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub censored: u64,
}

impl Estimate {
    pub fn new(name: impl Into<String>, value: f64, ci: Option<Interval>, n: u64, censored: u64) -> Estimate {
        let (ci_low, ci_high) = ci.map_or((f64::NAN, f64::NAN), |c| (c.lo, c.hi));
        Estimate {
            name: name.into(),
            value,
            ci_low,
            ci_high,
            n,
            censored,
        }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Estimate {
        Estimate::new(name, value, None, 1, 0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub params: serde_json::Value,
    pub estimates: Vec<Estimate>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl CriterionReport {
    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}
