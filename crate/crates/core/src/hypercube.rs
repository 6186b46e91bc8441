//! Exact analysis of one quenched unit hypercube.
//!
//! The `2^d` corners form a transient chain; leaving the cube is absorption.
//! Everything here is a linear solve on that chain, see [`crate::chain`].

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{AbsorbingChain, Factor};
use crate::environment::{Environment, Medium, SiteLaw, TransitionVector};
use crate::error::{Error, Result};
use crate::lattice::{Site, UnitHypercube};
use crate::rng::{derive, domain, env_seed};
use crate::stats::{chi_square_gof, fmt17, sample_moment_verdict, ChiSquareResult, MeanCi, MomentVerdict, TailIndexEstimate};
use crate::walk::Walker;

/// The corner chain of a cube in a fixed environment.
#[derive(Clone, Debug)]
pub struct QuenchedHypercube {
    pub cube: UnitHypercube,
    dim: usize,
    /// `n × n`, row-major, `n = 2^d`.
    interior: Vec<f64>,
    /// `n × d`: mass leaving corner `m` along frame axis `i`.
    exits: Vec<f64>,
}

impl QuenchedHypercube {
    pub fn new<M: Medium + ?Sized>(env: &M, cube: UnitHypercube) -> Result<QuenchedHypercube> {
        if cube.dim() != env.dim() {
            return Err(Error::param("cube and environment dimensions differ"));
        }
        let vs: Vec<TransitionVector> = cube.corners().iter().map(|c| env.transitions_at(c)).collect();
        QuenchedHypercube::from_vectors(cube, &vs)
    }

    /// `vectors[m]` is the transition vector at corner `m`.
    pub fn from_vectors(cube: UnitHypercube, vectors: &[TransitionVector]) -> Result<QuenchedHypercube> {
        let d = cube.dim();
        let n = cube.n_corners();
        if vectors.len() != n {
            return Err(Error::param("need one transition vector per corner"));
        }
        let mut interior = vec![0.0; n * n];
        let mut exits = vec![0.0; n * d];
        for (m, tv) in vectors.iter().enumerate() {
            if tv.dim() != d {
                return Err(Error::param("transition vector dimension differs from the cube"));
            }
            for i in 0..d {
                interior[m * n + (m ^ (1 << i))] = tv.p(cube.interior_dir(m, i));
                exits[m * d + i] = tv.p(cube.exterior_dir(m, i));
            }
        }
        Ok(QuenchedHypercube {
            cube,
            dim: d,
            interior,
            exits,
        })
    }

    pub fn n(&self) -> usize {
        1 << self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn interior(&self, from: usize, to: usize) -> f64 {
        self.interior[from * self.n() + to]
    }

    /// One-step probability of leaving through the exterior neighbor of
    /// corner `m` along frame axis `i`.
    #[inline]
    pub fn exit_along(&self, m: usize, i: usize) -> f64 {
        self.exits[m * self.dim + i]
    }

    pub fn exit_total(&self, m: usize) -> f64 {
        (0..self.dim).map(|i| self.exit_along(m, i)).sum()
    }

    /// `Q_y`: the largest one-step exit probability at corner `y`.
    pub fn q(&self, m: usize) -> f64 {
        (0..self.dim).map(|i| self.exit_along(m, i)).fold(0.0, f64::max)
    }

    /// Frame axis realizing `Q_y`, ties to the smallest axis.
    pub fn q_axis(&self, m: usize) -> usize {
        let mut best = 0;
        for i in 1..self.dim {
            if self.exit_along(m, i) > self.exit_along(m, best) {
                best = i;
            }
        }
        best
    }

    pub fn row_sum(&self, m: usize) -> f64 {
        (0..self.n()).map(|j| self.interior(m, j)).sum::<f64>() + self.exit_total(m)
    }

    pub fn chain(&self) -> AbsorbingChain {
        let n = self.n();
        let exit = (0..n).map(|m| self.exit_total(m)).collect();
        AbsorbingChain::new(n, self.interior.clone(), exit).expect("valid chain")
    }

    /// Expected visits to each corner before returning to `x` or leaving,
    /// starting from `x` (time 0 counted at `x` only), on the chain where
    /// `x` is killed after the first step.
    fn visits_before_return(&self, x: usize) -> Result<Vec<f64>> {
        let n = self.n();
        let killed = self.chain().kill(x);
        let f = killed.factor()?;
        let idx: Vec<usize> = (0..n).filter(|&i| i != x).collect();
        let mut out = vec![0.0; n];
        out[x] = 1.0;
        for (b, &y) in idx.iter().enumerate() {
            let mut rhs = vec![0.0; n - 1];
            rhs[b] = 1.0;
            let g = f.solve(&rhs);
            out[y] = idx.iter().enumerate().map(|(a, &w)| self.interior(x, w) * g[a]).sum();
        }
        Ok(out)
    }

    /// `P_x[exit through the neighbor of y along axis i, before T_x^+]`,
    /// indexed `[y * d + i]`.
    pub fn escape_by_site(&self, x: usize) -> Result<Vec<f64>> {
        let v = self.visits_before_return(x)?;
        let d = self.dim;
        Ok((0..self.n() * d).map(|k| v[k / d] * self.exits[k]).collect())
    }

    /// `Q̃_{x,·}`.
    pub fn qtilde_row(&self, x: usize) -> Result<Vec<f64>> {
        let v = self.visits_before_return(x)?;
        Ok((0..self.n()).map(|y| v[y] * self.exit_total(y)).collect())
    }

    /// `[x0][x] = P_{x0}[T_x < T^ex]`.
    pub fn hit_before_exit(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for x in 0..n {
            let f = self.chain().kill(x).factor()?;
            let idx: Vec<usize> = (0..n).filter(|&i| i != x).collect();
            let rhs: Vec<f64> = idx.iter().map(|&w| self.interior(w, x)).collect();
            let h = f.solve(&rhs);
            for (a, &w) in idx.iter().enumerate() {
                out[w][x] = h[a];
            }
            out[x][x] = 1.0;
        }
        Ok(out)
    }

    pub fn analyze(&self, moment_order: usize) -> Result<ExitAnalysis> {
        if moment_order < 1 {
            return Err(Error::param("moment order must be at least 1"));
        }
        let n = self.n();
        let chain = self.chain();
        let factor = chain.factor()?;
        let fundamental: Vec<Vec<f64>> = {
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    factor.solve(&e)
                })
                .collect();
            (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
        };
        let moments = exit_moments(&chain, &factor, moment_order);
        let qtilde: Vec<Vec<f64>> = (0..n).map(|x| self.qtilde_row(x)).collect::<Result<_>>()?;
        let qtilde_sum = qtilde.iter().map(|r| r.iter().sum()).collect();
        Ok(ExitAnalysis {
            q: (0..n).map(|m| self.q(m)).collect(),
            qtilde,
            qtilde_sum,
            mean_exit: moments[0].clone(),
            fundamental,
            moments,
            hit_before_exit: self.hit_before_exit()?,
        })
    }
}

/// `E_x[T^k]`, `k = 1..=order`, from
/// `(I - P) m_k = 1 + Σ_{j<k} C(k,j) P m_j`.
fn exit_moments(chain: &AbsorbingChain, factor: &Factor, order: usize) -> Vec<Vec<f64>> {
    let n = chain.n();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(order);
    for k in 1..=order {
        let mut rhs = vec![1.0; n];
        for (j, mj) in out.iter().enumerate() {
            let c = binomial(k, j + 1);
            for (x, r) in rhs.iter_mut().enumerate() {
                let pm: f64 = (0..n).filter(|&y| y != x).map(|y| chain.p(x, y) * mj[y]).sum();
                *r += c * pm;
            }
        }
        out.push(factor.solve(&rhs));
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact exit quantities of a quenched hypercube; corners indexed by mask.
#[derive(Clone, Debug, Serialize)]
pub struct ExitAnalysis {
    pub q: Vec<f64>,
    /// `qtilde[x][y] = Q̃_{x,y}`.
    pub qtilde: Vec<Vec<f64>>,
    /// `Q̃_x = Σ_y Q̃_{x,y}`.
    pub qtilde_sum: Vec<f64>,
    pub mean_exit: Vec<f64>,
    /// `fundamental[x0][x] = E_{x0}[N(x)]`.
    pub fundamental: Vec<Vec<f64>>,
    /// `moments[k-1][x] = E_x[T^k]`.
    pub moments: Vec<Vec<f64>>,
    /// `[x0][x] = P_{x0}[T_x < T^ex]`.
    pub hit_before_exit: Vec<Vec<f64>>,
}

impl ExitAnalysis {
    pub fn max_q(&self) -> f64 {
        self.q.iter().copied().fold(0.0, f64::max)
    }

    /// Checks the visit identity, the `Q̃` sandwich, the mean-exit sandwich
    /// and `E[T] = Σ E[N]`. Returns one message per failure.
    pub fn identity_failures(&self, tol: f64) -> Vec<String> {
        let n = self.q.len();
        let slack = |x: f64| 1e-12 * x.abs();
        let mut bad = Vec::new();
        for x0 in 0..n {
            for x in 0..n {
                let lhs = self.fundamental[x0][x] * self.qtilde_sum[x];
                let rhs = self.hit_before_exit[x0][x];
                if (lhs - rhs).abs() > tol {
                    bad.push(format!("E_{x0}[N({x})]·Q̃_{x} = {lhs} but P_{x0}[T_{x} < T^ex] = {rhs}"));
                }
            }
            let row = self.qtilde_sum[x0];
            let max = self.qtilde[x0].iter().copied().fold(0.0, f64::max);
            for y in 0..n {
                if self.qtilde[x0][y] > row + slack(row) {
                    bad.push(format!("Q̃_{{{x0},{y}}} > Q̃_{x0}"));
                }
            }
            if row > n as f64 * max + slack(row) {
                bad.push(format!("Q̃_{x0} > 2^d max_y Q̃_{{{x0},y}}"));
            }
            let m = self.mean_exit[x0];
            let upper: f64 = self.qtilde_sum.iter().map(|q| 1.0 / q).sum();
            if 1.0 / row > m + slack(m) || m > upper + slack(upper) {
                bad.push(format!("mean exit {m} outside [{}, {upper}]", 1.0 / row));
            }
            let visits: f64 = self.fundamental[x0].iter().sum();
            if (visits - m).abs() > tol * m.max(1.0) {
                bad.push(format!("Σ_x E_{x0}[N(x)] = {visits} but E_{x0}[T^ex] = {m}"));
            }
        }
        bad
    }

    /// From every corner each step leaves with probability at most
    /// `d max_y Q_y`, so `E_0[T^ex] d max_y Q_y >= 1`.
    pub fn exit_rate_bound_holds(&self, dim: usize) -> bool {
        self.mean_exit[0] * dim as f64 * self.max_q() >= 1.0 - 1e-12
    }
}

pub fn analyze<M: Medium + ?Sized>(env: &M, cube: UnitHypercube, moment_order: usize) -> Result<ExitAnalysis> {
    QuenchedHypercube::new(env, cube)?.analyze(moment_order)
}

/// Which quenched value a replicate contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerChoice {
    /// `max_x E_x[(T^ex)^α]`.
    Max,
    /// `E_x[(T^ex)^α]` for one corner mask.
    Corner(usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct FractionalMomentReport {
    pub alpha: f64,
    pub replicates: usize,
    pub exact: bool,
    pub corner: CornerChoice,
    /// Walks that hit the budget (non-integer `α` only).
    pub censored_walks: u64,
    pub tail: Option<TailIndexEstimate>,
    pub verdict: MomentVerdict,
    pub median: f64,
    pub max: f64,
}

/// Parameters of [`fractional_moment`].
#[derive(Clone, Debug)]
pub struct FractionalMomentParams {
    pub alpha: f64,
    pub replicates: usize,
    pub corner: CornerChoice,
    /// Walks per corner and budget per walk when `α` is not an integer.
    pub walks: usize,
    pub walk_budget: u64,
    pub seed: u64,
    pub hill_k: Option<usize>,
}

/// Per-replicate quenched values of `E_x[(T^ex_𝔥)^α]` on `𝔥_0`.
pub fn quenched_moments(law: &SiteLaw, p: &FractionalMomentParams) -> Result<(Vec<f64>, u64)> {
    if !(p.alpha > 0.0) {
        return Err(Error::param("alpha must be positive"));
    }
    law.validate()?;
    let d = law.dim();
    let integer = p.alpha.fract() == 0.0 && p.alpha <= 8.0;
    let results: Vec<Result<(f64, u64)>> = (0..p.replicates)
        .into_par_iter()
        .map(|r| {
            let env = Environment::new(law.clone(), env_seed(p.seed, r as u64))?;
            let cube = UnitHypercube::at(Site::origin(d));
            let per_corner: Vec<f64>;
            let mut censored = 0;
            if integer {
                let a = analyze(&env, cube, p.alpha as usize)?;
                per_corner = a.moments[p.alpha as usize - 1].clone();
            } else {
                let corners: Vec<usize> = match p.corner {
                    CornerChoice::Max => (0..cube.n_corners()).collect(),
                    CornerChoice::Corner(m) => vec![m],
                };
                let mut v = vec![0.0; cube.n_corners()];
                for m in corners {
                    let mut acc = 0.0;
                    for w in 0..p.walks {
                        let seed = derive(p.seed, &[domain::SAMPLER, r as u64, m as u64, w as u64]);
                        let mut walker = Walker::new(cube.corner(m), seed);
                        while cube.contains(&walker.position) && walker.time < p.walk_budget {
                            walker.step(&env);
                        }
                        if cube.contains(&walker.position) {
                            censored += 1;
                        }
                        acc += (walker.time as f64).powf(p.alpha);
                    }
                    v[m] = acc / p.walks as f64;
                }
                per_corner = v;
            }
            let value = match p.corner {
                CornerChoice::Max => per_corner.iter().copied().fold(0.0, f64::max),
                CornerChoice::Corner(m) => per_corner[m],
            };
            Ok((value, censored))
        })
        .collect();
    let mut values = Vec::with_capacity(p.replicates);
    let mut censored = 0;
    for r in results {
        let (v, c) = r?;
        values.push(v);
        censored += c;
    }
    Ok((values, censored))
}

/// Hill-index verdict on the law of the quenched moment across environments.
pub fn fractional_moment(law: &SiteLaw, p: &FractionalMomentParams) -> Result<FractionalMomentReport> {
    if let CornerChoice::Corner(m) = p.corner {
        if m >= 1 << law.dim() {
            return Err(Error::param("corner mask out of range"));
        }
    }
    let (values, censored_walks) = quenched_moments(law, p)?;
    // the annealed moment is the environment mean of the quenched values
    let (verdict, tail) = sample_moment_verdict(&values, 1.0, p.hill_k)?;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(FractionalMomentReport {
        alpha: p.alpha,
        replicates: p.replicates,
        exact: p.alpha.fract() == 0.0 && p.alpha <= 8.0,
        corner: p.corner,
        censored_walks,
        tail,
        verdict,
        median: sorted[sorted.len() / 2],
        max: *sorted.last().unwrap(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VisitLawReport {
    pub corner: usize,
    pub runs: u64,
    pub qtilde: f64,
    /// `counts[k-1]` runs with `N(x) = k`; the last bin holds `N >= len`.
    pub counts: Vec<u64>,
    pub chi_square: ChiSquareResult,
    pub mean_visits: MeanCi,
}

/// Compare the number of visits `N(x)` before exit, started at `x`, with
/// `Geometric(Q̃_x)` on `{1, 2, ...}`.
pub fn visit_law_check<M: Medium + ?Sized>(
    env: &M,
    cube: UnitHypercube,
    corner: usize,
    runs: u64,
    seed: u64,
) -> Result<VisitLawReport> {
    if runs < 10_000 {
        return Err(Error::param("visit law check needs at least 10^4 runs"));
    }
    let qc = QuenchedHypercube::new(env, cube)?;
    if corner >= qc.n() {
        return Err(Error::param("corner mask out of range"));
    }
    let q: f64 = qc.qtilde_row(corner)?.iter().sum();
    let x = cube.corner(corner);
    // bins until the geometric tail expectation drops below one run
    let mut bins = 1;
    while bins < 200 && (1.0 - q).powi(bins as i32) * runs as f64 >= 1.0 {
        bins += 1;
    }
    let mut counts = vec![0u64; bins];
    let (mut s1, mut s2) = (0.0, 0.0);
    for r in 0..runs {
        let mut w = Walker::new(x, derive(seed, &[domain::SAMPLER, r]));
        let mut visits = 1u64;
        loop {
            w.step(env);
            if !cube.contains(&w.position) {
                break;
            }
            if w.position == x {
                visits += 1;
            }
        }
        counts[(visits as usize).min(bins) - 1] += 1;
        s1 += visits as f64;
        s2 += (visits * visits) as f64;
    }
    let mut probs: Vec<f64> = (1..bins).map(|k| (1.0 - q).powi(k as i32 - 1) * q).collect();
    probs.push((1.0 - q).powi(bins as i32 - 1));
    let chi_square = if bins == 1 {
        ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            bins: 1,
        }
    } else {
        chi_square_gof(&counts, &probs)?
    };
    let n = runs as f64;
    let m = s1 / n;
    let sd = ((s2 / n - m * m).max(0.0) * n / (n - 1.0)).sqrt();
    let half = crate::stats::Z95 * sd / n.sqrt();
    Ok(VisitLawReport {
        corner,
        runs,
        qtilde: q,
        counts,
        chi_square,
        mean_visits: MeanCi {
            mean: m,
            ci: crate::stats::Interval::new(m - half, m + half),
            n: runs as usize,
        },
    })
}

/// CSV header for per-replicate hypercube rows.
pub fn csv_header(dim: usize, moment_order: usize) -> String {
    let n = 1 << dim;
    let mut cols = vec!["seed".to_string()];
    cols.extend((0..n).map(|m| format!("Q_{m}")));
    cols.extend((0..n).map(|m| format!("Qtilde_{m}")));
    cols.extend((0..n).map(|m| format!("mean_exit_{m}")));
    for k in 2..=moment_order {
        cols.extend((0..n).map(|m| format!("moment{k}_{m}")));
    }
    cols.join(",")
}

pub fn csv_row(seed: u64, a: &ExitAnalysis) -> String {
    let mut cols = vec![seed.to_string()];
    cols.extend(a.q.iter().map(|x| fmt17(*x)));
    cols.extend(a.qtilde_sum.iter().map(|x| fmt17(*x)));
    for m in &a.moments {
        cols.extend(m.iter().map(|x| fmt17(*x)));
    }
    cols.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Homogeneous;
    use crate::lattice::Direction;

    #[test]
    fn uniform_square_golden_values() {
        let env = Homogeneous(TransitionVector::uniform(2));
        let a = analyze(&env, UnitHypercube::at(Site::origin(2)), 2).unwrap();
        for m in 0..4 {
            assert!((a.mean_exit[m] - 2.0).abs() < 1e-12);
            assert!((a.q[m] - 0.25).abs() < 1e-15);
            // geometric(1/2): E[T^2] = (2 - p)/p^2 = 6
            assert!((a.moments[1][m] - 6.0).abs() < 1e-12);
        }
        assert!((a.qtilde_sum[0] - 6.0 / 7.0).abs() < 1e-12);
        assert!((a.qtilde[0][0] - 0.5).abs() < 1e-12);
        assert!((a.qtilde[0][3] - 1.0 / 14.0).abs() < 1e-12);
        assert!((a.fundamental[0][0] - 7.0 / 6.0).abs() < 1e-12);
        assert!(a.identity_failures(1e-10).is_empty());
    }

    #[test]
    fn one_step_exit_gives_single_visit() {
        // every corner steps straight out along -e_1 or +e_1
        let cube = UnitHypercube::at(Site::origin(2));
        let vs: Vec<TransitionVector> = (0..4)
            .map(|m| TransitionVector::deterministic(cube.exterior_dir(m, 0)))
            .collect();
        let qc = QuenchedHypercube::from_vectors(cube, &vs).unwrap();
        let a = qc.analyze(1).unwrap();
        assert!(a.mean_exit.iter().all(|&m| m == 1.0));
        assert!(a.qtilde_sum.iter().all(|&q| q == 1.0));
    }

    #[test]
    fn closed_cube_is_degenerate() {
        let cube = UnitHypercube::at(Site::new(&[0]));
        let vs = [
            TransitionVector::deterministic(Direction::new(0, 1)),
            TransitionVector::deterministic(Direction::new(1, 1)),
        ];
        let qc = QuenchedHypercube::from_vectors(cube, &vs).unwrap();
        assert!(matches!(qc.analyze(1), Err(Error::DegenerateEnvironment(_))));
    }

    #[test]
    fn rows_sum_to_one() {
        let env = Environment::new(SiteLaw::dirichlet_flat(3), 4).unwrap();
        let qc = QuenchedHypercube::new(&env, UnitHypercube::at(Site::new(&[2, -1, 0]))).unwrap();
        for m in 0..8 {
            assert!((qc.row_sum(m) - 1.0).abs() < 1e-12);
            assert_eq!((0..8).filter(|&j| qc.interior(m, j) > 0.0).count(), 3);
        }
    }

    #[test]
    fn escape_by_site_sums_to_qtilde() {
        let env = Environment::new(SiteLaw::expl(2, 0.3), 8).unwrap();
        let qc = QuenchedHypercube::new(&env, UnitHypercube::at(Site::origin(2))).unwrap();
        for x in 0..4 {
            let esc = qc.escape_by_site(x).unwrap();
            let row = qc.qtilde_row(x).unwrap();
            for y in 0..4 {
                let s: f64 = esc[y * 2..y * 2 + 2].iter().sum();
                assert!((s - row[y]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(4, 4), 1.0);
    }
}
