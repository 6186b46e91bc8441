//! The quenched walk: step sampling, stopping rules and censoring.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::environment::{Medium, TransitionVector};
use crate::error::{Error, Result};
use crate::lattice::{Direction, SlabBox, Site, TiltedBox, UnitHypercube};
use crate::rng::{derive, domain, CounterStream};
use crate::stats::{wilson, Interval};

pub type SitePredicate = Arc<dyn Fn(&Site) -> bool + Send + Sync>;

/// A set of sites, given extensionally or by a membership test.
#[derive(Clone)]
pub enum Region {
    Sites(HashSet<Site>),
    Cube(UnitHypercube),
    Tilted(TiltedBox),
    Slab(SlabBox),
    Predicate(SitePredicate),
}

impl Region {
    pub fn site(x: Site) -> Region {
        Region::Sites(HashSet::from([x]))
    }

    #[inline]
    pub fn contains(&self, x: &Site) -> bool {
        match self {
            Region::Sites(s) => s.contains(x),
            Region::Cube(c) => c.contains(x),
            Region::Tilted(b) => b.contains(x),
            Region::Slab(b) => b.contains(x),
            Region::Predicate(f) => f(x),
        }
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Sites(s) => write!(f, "Sites({})", s.len()),
            Region::Cube(c) => write!(f, "{c:?}"),
            Region::Tilted(b) => write!(f, "Tilted(L={}, beta={})", b.l, b.beta),
            Region::Slab(b) => write!(f, "Slab(L={}, L'={})", b.l, b.lp),
            Region::Predicate(_) => write!(f, "Predicate"),
        }
    }
}

/// `T^ex_A`, `T_A` and `T_A^+`.
#[derive(Clone, Debug)]
pub enum StopCondition {
    /// First `n >= 0` with `X_n` outside the region.
    ExitOf(Region),
    /// First `n >= 0` with `X_n` in the region.
    Hit(Region),
    /// First `n >= 1` with `X_n` in the region.
    Revisit(Region),
    /// Whichever of the listed conditions happens first; ties go to the
    /// earliest listed.
    FirstOf(Vec<StopCondition>),
}

impl StopCondition {
    /// Index of the satisfied leaf condition and whether it is an exit.
    fn check(&self, x: &Site, n: u64, base: usize) -> Option<Termination> {
        match self {
            StopCondition::ExitOf(r) => (!r.contains(x)).then_some(Termination::ExitedSet { condition: base }),
            StopCondition::Hit(r) => r.contains(x).then_some(Termination::HitTarget { condition: base }),
            StopCondition::Revisit(r) => {
                (n >= 1 && r.contains(x)).then_some(Termination::HitTarget { condition: base })
            }
            StopCondition::FirstOf(list) => list
                .iter()
                .enumerate()
                .find_map(|(i, c)| c.check(x, n, base + i)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StopSpec {
    pub condition: StopCondition,
    pub horizon: u64,
}

impl StopSpec {
    pub fn new(condition: StopCondition, horizon: u64) -> Result<StopSpec> {
        if horizon == 0 {
            return Err(Error::param("horizon must be at least 1"));
        }
        Ok(StopSpec { condition, horizon })
    }

    /// Run for exactly `horizon` steps.
    pub fn steps(horizon: u64) -> Result<StopSpec> {
        StopSpec::new(StopCondition::FirstOf(Vec::new()), horizon)
    }
}

/// How a run ended. `condition` indexes the leaf within a `FirstOf` list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    HitTarget { condition: usize },
    ExitedSet { condition: usize },
    BudgetExhausted,
}

impl Termination {
    pub fn condition(&self) -> Option<usize> {
        match self {
            Termination::HitTarget { condition } | Termination::ExitedSet { condition } => Some(*condition),
            Termination::BudgetExhausted => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Termination::BudgetExhausted)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub start: Site,
    pub steps: Vec<Direction>,
    pub horizon: u64,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `X_0, X_1, ..., X_n`.
    pub fn positions(&self) -> impl Iterator<Item = Site> + '_ {
        std::iter::once(self.start).chain(self.steps.iter().scan(self.start, |x, &e| {
            *x = x.step(e);
            Some(*x)
        }))
    }

    pub fn end(&self) -> Site {
        self.steps.iter().fold(self.start, |x, &e| x.step(e))
    }

    /// `step,x_1,...,x_d` rows, starting with step 0.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.start.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        writeln!(w, "step,{}", header.join(","))?;
        for (n, x) in self.positions().enumerate() {
            let cs: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
            writeln!(w, "{n},{}", cs.join(","))?;
        }
        Ok(())
    }
}

/// Key of the step stream for a walk seed.
pub fn walk_key(walk_seed: u64) -> u64 {
    derive(walk_seed, &[domain::WALK])
}

/// An exponential tilt of the step law against `ell`:
/// `q(e) ∝ p(e) exp(-θ e·ℓ)`.
#[derive(Clone, Debug)]
pub struct Tilt {
    pub theta: f64,
    pub ell: Vec<f64>,
}

impl Tilt {
    /// Tilted vector and `ln Z`, `Z = Σ p(e) exp(-θ e·ℓ)`.
    pub fn apply(&self, tv: &TransitionVector) -> (TransitionVector, f64) {
        let d = tv.dim();
        let w: Vec<f64> = Direction::all(d)
            .map(|e| tv.p(e) * (-self.theta * e.dot(&self.ell)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|x| x / z).collect();
        (TransitionVector::new(&q).expect("tilted vector"), z.ln())
    }
}

/// Result of a run that does not keep its path.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub end: Site,
    pub steps: u64,
    pub terminated_by: Termination,
    /// `ln dP/dQ` of the path when run under a tilt, else 0.
    pub log_weight: f64,
}

fn run_inner<M: Medium + ?Sized>(
    env: &M,
    start: Site,
    stop: &StopSpec,
    walk_seed: u64,
    tilt: Option<&Tilt>,
    mut record: Option<&mut Vec<Direction>>,
) -> Outcome {
    let mut s = CounterStream::new(walk_key(walk_seed));
    let mut x = start;
    let mut log_weight = 0.0;
    if let Some(t) = stop.condition.check(&x, 0, 0) {
        return Outcome {
            end: x,
            steps: 0,
            terminated_by: t,
            log_weight,
        };
    }
    for n in 1..=stop.horizon {
        let tv = env.transitions_at(&x);
        let e = match tilt {
            None => tv.sample(s.next_f64()),
            Some(tl) => {
                let (q, ln_z) = tl.apply(&tv);
                let e = q.sample(s.next_f64());
                log_weight += ln_z + tl.theta * e.dot(&tl.ell);
                e
            }
        };
        x = x.step(e);
        if let Some(r) = record.as_deref_mut() {
            r.push(e);
        }
        if let Some(t) = stop.condition.check(&x, n, 0) {
            return Outcome {
                end: x,
                steps: n,
                terminated_by: t,
                log_weight,
            };
        }
    }
    Outcome {
        end: x,
        steps: stop.horizon,
        terminated_by: Termination::BudgetExhausted,
        log_weight,
    }
}

/// Sample one quenched trajectory.
pub fn run<M: Medium + ?Sized>(env: &M, start: Site, stop: &StopSpec, walk_seed: u64) -> Result<Trajectory> {
    check_dims(env, &start, stop)?;
    let mut steps = Vec::new();
    let out = run_inner(env, start, stop, walk_seed, None, Some(&mut steps));
    Ok(Trajectory {
        start,
        steps,
        horizon: stop.horizon,
        terminated_by: out.terminated_by,
    })
}

/// Like [`run`] but only keeps the endpoint.
pub fn run_outcome<M: Medium + ?Sized>(env: &M, start: Site, stop: &StopSpec, walk_seed: u64) -> Result<Outcome> {
    check_dims(env, &start, stop)?;
    Ok(run_inner(env, start, stop, walk_seed, None, None))
}

/// Run under an exponential tilt of the step law. The environment itself is
/// untouched; `log_weight` turns indicator functions of the path into
/// unbiased estimates under the untilted quenched law.
pub fn run_tilted<M: Medium + ?Sized>(
    env: &M,
    start: Site,
    stop: &StopSpec,
    walk_seed: u64,
    tilt: &Tilt,
) -> Result<Outcome> {
    check_dims(env, &start, stop)?;
    if tilt.ell.len() != start.dim() || !tilt.theta.is_finite() {
        return Err(Error::param("tilt direction has the wrong dimension"));
    }
    Ok(run_inner(env, start, stop, walk_seed, Some(tilt), None))
}

fn check_dims<M: Medium + ?Sized>(env: &M, start: &Site, stop: &StopSpec) -> Result<()> {
    if start.dim() != env.dim() {
        return Err(Error::param(format!(
            "start site has dimension {}, environment has {}",
            start.dim(),
            env.dim()
        )));
    }
    if stop.horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    Ok(())
}

/// A walk advanced step by step, for long runs read at checkpoints.
#[derive(Clone, Debug)]
pub struct Walker {
    pub position: Site,
    pub time: u64,
    stream: CounterStream,
}

impl Walker {
    pub fn new(start: Site, walk_seed: u64) -> Walker {
        Walker {
            position: start,
            time: 0,
            stream: CounterStream::new(walk_key(walk_seed)),
        }
    }

    #[inline]
    pub fn step<M: Medium + ?Sized>(&mut self, env: &M) -> Direction {
        let e = env.transitions_at(&self.position).sample(self.stream.next_f64());
        self.position = self.position.step(e);
        self.time += 1;
        e
    }

    /// Advance to time `n` (no-op if already past it).
    pub fn advance_to<M: Medium + ?Sized>(&mut self, env: &M, n: u64) -> Site {
        while self.time < n {
            self.step(env);
        }
        self.position
    }
}

/// Monte Carlo estimate of `P_x[T_target < T_r^+]` where `r` is the
/// forbidden return site (usually `x` itself).
#[derive(Clone, Debug, Serialize)]
pub struct HitEstimate {
    pub runs: u64,
    pub hits: u64,
    pub returns: u64,
    pub censored: u64,
    /// `hits / (hits + returns)`, the censored runs excluded.
    pub estimate: f64,
    pub ci: Interval,
}

pub fn hit_before_return<M: Medium + ?Sized>(
    env: &M,
    x: Site,
    target: &HashSet<Site>,
    forbidden_return: Site,
    runs: u64,
    horizon: u64,
    seed: u64,
) -> Result<HitEstimate> {
    if target.contains(&x) {
        return Err(Error::param("start site must not be in the target"));
    }
    let stop = StopSpec::new(
        StopCondition::FirstOf(vec![
            StopCondition::Hit(Region::Sites(target.clone())),
            StopCondition::Revisit(Region::site(forbidden_return)),
        ]),
        horizon,
    )?;
    let (mut hits, mut returns, mut censored) = (0, 0, 0);
    for r in 0..runs {
        let out = run_outcome(env, x, &stop, derive(seed, &[domain::SAMPLER, r]))?;
        match out.terminated_by.condition() {
            Some(0) => hits += 1,
            Some(_) => returns += 1,
            None => censored += 1,
        }
    }
    let resolved = hits + returns;
    let estimate = if resolved > 0 { hits as f64 / resolved as f64 } else { f64::NAN };
    Ok(HitEstimate {
        runs,
        hits,
        returns,
        censored,
        estimate,
        ci: wilson(hits, resolved, 1.96),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Environment, Homogeneous, SiteLaw};

    fn forward(d: usize) -> Homogeneous {
        Homogeneous(TransitionVector::deterministic(Direction::new(0, d)))
    }

    #[test]
    fn deterministic_drift_hits_in_five_steps() {
        let env = forward(2);
        let target = Site::new(&[5, 0]);
        let stop = StopSpec::new(StopCondition::Hit(Region::site(target)), 100).unwrap();
        let t = run(&env, Site::origin(2), &stop, 1).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.end(), target);
        assert_eq!(t.terminated_by, Termination::HitTarget { condition: 0 });
    }

    #[test]
    fn horizon_rules() {
        let env = Environment::new(SiteLaw::uniform(2), 1).unwrap();
        assert!(StopSpec::steps(0).is_err());
        let stop = StopSpec::steps(1).unwrap();
        let t = run(&env, Site::origin(2), &stop, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.terminated_by.is_censored());
    }

    #[test]
    fn consecutive_positions_are_neighbors() {
        let env = Environment::new(SiteLaw::dirichlet_flat(3), 4).unwrap();
        let t = run(&env, Site::origin(3), &StopSpec::steps(500).unwrap(), 8).unwrap();
        let pos: Vec<Site> = t.positions().collect();
        assert_eq!(pos.len(), 501);
        for w in pos.windows(2) {
            assert_eq!(w[1].sub(&w[0]).l1(), 1);
        }
        let again = run(&env, Site::origin(3), &StopSpec::steps(500).unwrap(), 8).unwrap();
        assert_eq!(t.steps, again.steps);
    }

    #[test]
    fn square_exit_time_mean_is_two() {
        let env = Environment::new(SiteLaw::uniform(2), 1).unwrap();
        let cube = UnitHypercube::at(Site::origin(2));
        let stop = StopSpec::new(StopCondition::ExitOf(Region::Cube(cube)), 10_000).unwrap();
        let n = 40_000;
        let total: u64 = (0..n)
            .map(|s| run_outcome(&env, Site::origin(2), &stop, s).unwrap().steps)
            .sum();
        let mean = total as f64 / n as f64;
        // geometric(1/2): variance 2, sd of mean ≈ 0.0071
        assert!((mean - 2.0).abs() < 0.03, "mean = {mean}");
    }

    #[test]
    fn hit_before_return_cases() {
        let env = forward(2);
        let target = HashSet::from([Site::new(&[1, 0])]);
        let est = hit_before_return(&env, Site::origin(2), &target, Site::origin(2), 100, 10, 1).unwrap();
        assert_eq!(est.estimate, 1.0);

        // d = 1, drift to the left, target on the right: never reached
        let left = Homogeneous(TransitionVector::new(&[0.0, 1.0]).unwrap());
        let target = HashSet::from([Site::new(&[1])]);
        let est = hit_before_return(&left, Site::new(&[0]), &target, Site::new(&[-1]), 50, 10, 2).unwrap();
        assert_eq!(est.hits, 0);
        assert_eq!(est.returns, 50);
    }

    #[test]
    fn tilted_weights_are_unbiased() {
        // E_Q[w] = 1 for any event-free path functional
        let env = Environment::new(SiteLaw::expl(2, 0.2), 3).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let tilt = Tilt {
            theta: 0.5,
            ell: vec![h, h],
        };
        let stop = StopSpec::steps(5).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|s| run_tilted(&env, Site::origin(2), &stop, s, &tilt).unwrap().log_weight.exp())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean weight {mean}");
    }

    #[test]
    fn walker_matches_run() {
        let env = Environment::new(SiteLaw::expl(2, 0.3), 5).unwrap();
        let t = run(&env, Site::origin(2), &StopSpec::steps(1000).unwrap(), 77).unwrap();
        let mut w = Walker::new(Site::origin(2), 77);
        assert_eq!(w.advance_to(&env, 1000), t.end());
    }

    #[test]
    fn csv_dump() {
        let env = forward(2);
        let t = run(&env, Site::origin(2), &StopSpec::steps(2).unwrap(), 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,x_1,x_2\n0,0,0\n1,1,0\n2,2,0\n");
    }
}
