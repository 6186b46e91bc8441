//! Random walks in i.i.d. random environments on `Z^d`.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: sites, directions, direction bases, unit hypercubes and the
//!   boxes and slabs used by the exit-time experiments.
//! * [`rng`] and [`environment`]: a stateless, site-keyed random environment.
//!   `transitions_at(x)` is a pure function of the master seed and the site.
//! * [`walk`]: the quenched Markov chain with stopping rules and censoring.
//! * [`regeneration`]: regeneration times, radii and renewal velocity.
//! * [`chain`] and [`hypercube`]: exact analysis of the unit hypercube as a
//!   small absorbing chain.
//! * [`criteria`]: marked Markovian hypercubes, path bundles and the moment,
//!   slab and box criteria.
//! * [`stats`]: tail-index, confidence-interval and goodness-of-fit tools.

pub mod chain;
pub mod criteria;
pub mod environment;
pub mod error;
pub mod hypercube;
pub mod lattice;
pub mod regeneration;
pub mod rng;
pub mod stats;
pub mod walk;

pub use environment::{Environment, SiteLaw, TransitionVector};
pub use error::{Error, Result};
pub use hypercube::{ExitAnalysis, QuenchedHypercube};
pub use lattice::{Direction, DirectionBasis, Site, UnitHypercube, MAX_DIM};
pub use regeneration::{RegenParams, RegenerationRecord};
pub use walk::{StopCondition, StopSpec, Termination, Trajectory};
