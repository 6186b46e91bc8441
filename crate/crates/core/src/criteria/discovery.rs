//! Hypercubes containing the origin, discovered one site at a time.
//!
//! A policy sees the environment only through a [`RevealedView`]. While
//! choosing `f_{i+1}` the view exposes `{f_0, …, f_i}`; while choosing the
//! marks it exposes the finished cube. Any other read fails with
//! [`Error::MeasurabilityViolation`], and every read is logged.

use std::cell::RefCell;

use serde::Serialize;

use crate::environment::{Medium, TransitionVector};
use crate::error::{Error, Result};
use crate::hypercube::QuenchedHypercube;
use crate::lattice::{Direction, Site, UnitHypercube};

/// Read access to the transition vectors of a revealed set of sites.
pub struct RevealedView<'a> {
    env: &'a dyn Medium,
    revealed: Vec<Site>,
    reads: RefCell<Vec<Site>>,
}

impl<'a> RevealedView<'a> {
    fn new(env: &'a dyn Medium, revealed: Vec<Site>) -> RevealedView<'a> {
        RevealedView {
            env,
            revealed,
            reads: RefCell::new(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.env.dim()
    }

    pub fn revealed(&self) -> &[Site] {
        &self.revealed
    }

    pub fn p(&self, x: &Site) -> Result<TransitionVector> {
        if !self.revealed.contains(x) {
            return Err(Error::MeasurabilityViolation { site: x.to_string() });
        }
        let mut reads = self.reads.borrow_mut();
        if !reads.contains(x) {
            reads.push(*x);
        }
        Ok(self.env.transitions_at(x))
    }

    fn into_reads(self) -> Vec<Site> {
        self.reads.into_inner()
    }
}

/// A rule for growing the cube and marking its corners.
pub trait DiscoveryPolicy: Sync {
    fn name(&self) -> String;

    /// `f_{i+1}` from the prefix `f_0..f_i`.
    fn next(&self, view: &RevealedView<'_>, prefix: &[Site]) -> Result<Site>;

    /// Marks `α_x`, indexed by the corner mask of the offset `x` in `𝔥`.
    fn marks(&self, view: &RevealedView<'_>, cube: &UnitHypercube) -> Result<Vec<f64>>;

    /// An optional label of the event the discovery fell into.
    fn event(&self, _view: &RevealedView<'_>) -> Result<Option<usize>> {
        Ok(None)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscoveryStep {
    pub site: Site,
    /// Sites whose transition vectors were read to choose `site`.
    pub reads: Vec<Site>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkedMarkovianHypercube {
    #[serde(skip)]
    pub cube: UnitHypercube,
    /// The anchor: `h = x0 + 𝔥`.
    pub x0: Site,
    /// `α_x` by corner mask of `x`.
    pub marks: Vec<f64>,
    pub log: Vec<DiscoveryStep>,
    pub mark_reads: Vec<Site>,
    pub event: Option<usize>,
}

impl MarkedMarkovianHypercube {
    /// Corner mask of the origin inside `h`.
    pub fn origin_mask(&self) -> usize {
        self.cube.mask_of(&Site::origin(self.x0.dim())).expect("h contains the origin")
    }

    /// Re-check the four discovery rules and the read sets on the log.
    pub fn audit(&self) -> Result<()> {
        let d = self.x0.dim();
        let n = 1usize << d;
        if self.log.len() != n || self.log[0].site != Site::origin(d) {
            return Err(Error::Invariant("discovery must start at the origin and reveal 2^d sites".into()));
        }
        for i in 1..n {
            let prefix: Vec<Site> = self.log[..i].iter().map(|s| s.site).collect();
            check_extension(&prefix, &self.log[i].site)?;
            if let Some(bad) = self.log[i].reads.iter().find(|r| !prefix.contains(r)) {
                return Err(Error::MeasurabilityViolation { site: bad.to_string() });
            }
        }
        if let Some(bad) = self.mark_reads.iter().find(|r| !self.cube.contains(r)) {
            return Err(Error::MeasurabilityViolation { site: bad.to_string() });
        }
        Ok(())
    }

    /// `Q̃^h_{0, x0+x}` for every corner mask `x`.
    pub fn qtilde_from_origin<M: Medium + ?Sized>(&self, env: &M) -> Result<Vec<f64>> {
        QuenchedHypercube::new(env, self.cube)?.qtilde_row(self.origin_mask())
    }

    /// `ln Π_x (Q̃_{0,x0+x})^{-α_x}`; corners with `α_x = 0` contribute 0.
    pub fn log_weighted_escape<M: Medium + ?Sized>(&self, env: &M) -> Result<f64> {
        let qt = self.qtilde_from_origin(env)?;
        Ok(self
            .marks
            .iter()
            .zip(&qt)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, q)| -a * q.ln())
            .sum())
    }
}

/// `f` extends `prefix` legally: it is a new neighbor of the prefix and the
/// extended set still fits in a unit hypercube containing the origin.
fn check_extension(prefix: &[Site], f: &Site) -> Result<()> {
    if prefix.contains(f) || !prefix.iter().any(|p| p.sub(f).l1() == 1) {
        return Err(Error::Invariant(format!("{f} is not on the outer boundary of the discovered prefix")));
    }
    let d = f.dim();
    for axis in 0..d {
        let vals = prefix.iter().chain(std::iter::once(f)).map(|s| s.coord(axis));
        let (lo, hi) = vals.fold((0i64, 0i64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo < -1 || hi > 1 || hi - lo > 1 {
            return Err(Error::Invariant(format!(
                "adding {f} leaves every unit hypercube containing the origin"
            )));
        }
    }
    Ok(())
}

/// Run a policy from the origin.
pub fn discover(env: &dyn Medium, policy: &dyn DiscoveryPolicy) -> Result<MarkedMarkovianHypercube> {
    let d = env.dim();
    let n = 1usize << d;
    let origin = Site::origin(d);
    let mut prefix = vec![origin];
    let mut log = vec![DiscoveryStep {
        site: origin,
        reads: Vec::new(),
    }];
    let mut event = None;
    for i in 1..n {
        let view = RevealedView::new(env, prefix.clone());
        let f = policy.next(&view, &prefix)?;
        if i == 1 {
            event = policy.event(&view)?;
        }
        check_extension(&prefix, &f)?;
        log.push(DiscoveryStep {
            site: f,
            reads: view.into_reads(),
        });
        prefix.push(f);
    }
    let lows: Vec<i64> = (0..d).map(|a| prefix.iter().map(|s| s.coord(a)).min().unwrap()).collect();
    let x0 = Site::new(&lows);
    let cube = UnitHypercube::at(x0);
    let view = RevealedView::new(env, cube.corners());
    let marks = policy.marks(&view, &cube)?;
    if marks.len() != n || marks.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::param("marks must be 2^d finite nonnegative numbers"));
    }
    Ok(MarkedMarkovianHypercube {
        cube,
        x0,
        marks,
        log,
        mark_reads: view.into_reads(),
        event,
    })
}

/// `Σ_x (γ_x ∧ α_x)`.
pub fn mark_sum(mmh: &MarkedMarkovianHypercube, gammas: &[f64]) -> Result<f64> {
    if gammas.len() != mmh.marks.len() {
        return Err(Error::param("need one gamma per corner"));
    }
    Ok(gammas.iter().zip(&mmh.marks).map(|(g, a)| g.min(*a)).sum())
}

/// Corners of `cube` ordered by graph distance from the origin, ties by
/// mask, with `first` (if given) moved right after the origin.
fn breadth_first(cube: &UnitHypercube, first: Option<Site>) -> Vec<Site> {
    let origin = Site::origin(cube.dim());
    let mut order = cube.corners();
    order.sort_by_key(|c| (c.sub(&origin).l1(), cube.mask_of(c)));
    if let Some(f) = first {
        let pos = order.iter().position(|c| *c == f).expect("first site in cube");
        let f = order.remove(pos);
        order.insert(1, f);
    }
    order
}

fn first_missing(order: &[Site], prefix: &[Site]) -> Result<Site> {
    order
        .iter()
        .find(|c| !prefix.contains(c))
        .copied()
        .ok_or_else(|| Error::Invariant("cube already discovered".into()))
}

/// A deterministic cube `x0 + 𝔥` with constant marks.
#[derive(Clone, Debug)]
pub struct FixedPolicy {
    pub x0: Site,
    pub marks: Vec<f64>,
}

impl FixedPolicy {
    pub fn new(x0: Site, marks: Vec<f64>) -> Result<FixedPolicy> {
        if !UnitHypercube::at(x0).contains(&Site::origin(x0.dim())) {
            return Err(Error::param("the fixed cube must contain the origin"));
        }
        if marks.len() != 1 << x0.dim() {
            return Err(Error::param("need one mark per corner"));
        }
        Ok(FixedPolicy { x0, marks })
    }

    /// The cube of the `(K̃)_1 ⇒ (K)_1` remark: the origin sits at corner
    /// `x_min` and only that corner carries the mark `1 + ε`.
    pub fn single_corner(dim: usize, x_min: usize, mark: f64) -> Result<FixedPolicy> {
        let corner = UnitHypercube::at(Site::origin(dim)).corner(x_min);
        let mut marks = vec![0.0; 1 << dim];
        marks[x_min] = mark;
        FixedPolicy::new(corner.scale(-1), marks)
    }
}

impl DiscoveryPolicy for FixedPolicy {
    fn name(&self) -> String {
        format!("fixed(x0={})", self.x0)
    }

    fn next(&self, _: &RevealedView<'_>, prefix: &[Site]) -> Result<Site> {
        first_missing(&breadth_first(&UnitHypercube::at(self.x0), None), prefix)
    }

    fn marks(&self, _: &RevealedView<'_>, _: &UnitHypercube) -> Result<Vec<f64>> {
        Ok(self.marks.clone())
    }
}

/// The construction turning `(E')_1` exponents `φ` into a marked cube.
///
/// `A_k` is the first `k` (directions in index order `e_1..e_d, -e_1..-e_d`)
/// with `p(0, e_k) >= δ`. On `A_k`, `k <= d`, the cube is `𝔥_0`; otherwise it
/// is `𝔥_{(-1,…,-1)}`.
#[derive(Clone, Debug)]
pub struct EPrimePolicy {
    pub delta: f64,
    /// `φ(e)` by direction index.
    pub phi: Vec<f64>,
}

impl EPrimePolicy {
    pub fn new(dim: usize, delta: f64, phi: Vec<f64>) -> Result<EPrimePolicy> {
        if !(delta > 0.0 && delta < 1.0 / (2 * dim) as f64) {
            return Err(Error::param("delta must lie in (0, 1/(2d))"));
        }
        if phi.len() != 2 * dim || phi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::param("phi must give 2d positive exponents"));
        }
        Ok(EPrimePolicy { delta, phi })
    }

    /// `δ = 1/(4d)`.
    pub fn with_default_delta(dim: usize, phi: Vec<f64>) -> Result<EPrimePolicy> {
        EPrimePolicy::new(dim, 1.0 / (4 * dim) as f64, phi)
    }

    /// The event index `k` (0-based direction index) at the origin.
    fn event_index(&self, view: &RevealedView<'_>) -> Result<usize> {
        let d = view.dim();
        let tv = view.p(&Site::origin(d))?;
        Direction::all(d)
            .position(|e| tv.p(e) >= self.delta)
            .ok_or_else(|| Error::DegenerateEnvironment("no direction at the origin reaches delta".into()))
    }

    fn cube_for(&self, d: usize, k: usize) -> UnitHypercube {
        if k < d {
            UnitHypercube::at(Site::origin(d))
        } else {
            UnitHypercube::at(Site::new(&vec![-1; d]))
        }
    }

    /// `γ_x = Σ_{e exterior at x} φ(e)`.
    pub fn gammas(&self, dim: usize) -> Vec<f64> {
        let h = UnitHypercube::at(Site::origin(dim));
        (0..1usize << dim)
            .map(|m| (0..dim).map(|i| self.phi[h.exterior_dir(m, i).index()]).sum())
            .collect()
    }

    /// `2 Σ φ − (φ(e_k) + φ(−e_k))` on `A_k`.
    pub fn expected_mark_sum(&self, k: usize) -> f64 {
        let d = self.phi.len() / 2;
        let e = Direction::new(k, d);
        2.0 * self.phi.iter().sum::<f64>() - (self.phi[e.index()] + self.phi[e.neg().index()])
    }

    /// `2 Σ φ − sup_e (φ(e) + φ(−e)) > 1`.
    pub fn admissible(&self) -> bool {
        let d = self.phi.len() / 2;
        let sup = (0..d).map(|i| self.phi[i] + self.phi[i + d]).fold(0.0, f64::max);
        2.0 * self.phi.iter().sum::<f64>() - sup > 1.0
    }
}

impl DiscoveryPolicy for EPrimePolicy {
    fn name(&self) -> String {
        format!("eprime(delta={})", self.delta)
    }

    fn next(&self, view: &RevealedView<'_>, prefix: &[Site]) -> Result<Site> {
        let d = view.dim();
        let k = self.event_index(view)?;
        let ek = Site::origin(d).step(Direction::new(k, d));
        first_missing(&breadth_first(&self.cube_for(d, k), Some(ek)), prefix)
    }

    fn event(&self, view: &RevealedView<'_>) -> Result<Option<usize>> {
        self.event_index(view).map(Some)
    }

    fn marks(&self, view: &RevealedView<'_>, cube: &UnitHypercube) -> Result<Vec<f64>> {
        let d = view.dim();
        let k = self.event_index(view)?;
        let dir_k = Direction::new(k, d);
        let v0 = Site::origin(d);
        let vd = v0.step(dir_k);
        let gammas = self.gammas(d);
        let offset = |s: &Site| cube.mask_of(s).expect("labelled vertex in cube");
        // the in-cube direction along `axis` from a corner
        let inward = |s: &Site, axis: usize| Direction::along(axis, s.coord(axis) == cube.anchor().coord(axis), d);
        let mut marks = vec![0.0; 1 << d];
        marks[offset(&v0)] = gammas[offset(&v0)];
        marks[offset(&vd)] = gammas[offset(&vd)];
        for axis in (0..d).filter(|&a| a != dir_k.axis()) {
            let e = inward(&v0, axis);
            marks[offset(&v0.step(e))] = self.phi[e.index()];
            let e = inward(&vd, axis);
            marks[offset(&vd.step(e))] = self.phi[e.index()];
        }
        Ok(marks)
    }
}
