//! Regeneration times of a finite trajectory.
//!
//! A finite path cannot show that the walk never backtracks, so a candidate
//! regeneration at time `S` is accepted only when at least `W` steps follow
//! it without a backtrack below its level. Candidates with a shorter window
//! are kept and flagged as censored.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{Environment, SiteLaw};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::rng::{env_seed, walk_seed};
use crate::stats::{batch_means, ks_two_sample, ratio_batch_ci, KsResult, MeanCi};
use crate::walk::{run, StopSpec, Trajectory};

/// Tolerance for comparisons between levels `X_n · ℓ`.
pub const LEVEL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegenParams {
    pub ell: Vec<f64>,
    pub a: f64,
    /// Steps without backtrack needed to certify a candidate.
    pub certify_margin: u64,
}

impl RegenParams {
    /// Requires `a ∈ (2√d, 10√d)`; use [`RegenParams::with_any_a`] to override.
    pub fn new(ell: &[f64], a: f64, certify_margin: u64) -> Result<RegenParams> {
        let d = ell.len() as f64;
        if !(a > 2.0 * d.sqrt() && a < 10.0 * d.sqrt()) {
            return Err(Error::param(format!("a = {a} outside (2√d, 10√d)")));
        }
        RegenParams::with_any_a(ell, a, certify_margin)
    }

    pub fn with_any_a(ell: &[f64], a: f64, certify_margin: u64) -> Result<RegenParams> {
        let norm = ell.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::param("ell must be a unit vector"));
        }
        if !(a > 0.0) {
            return Err(Error::param("a must be positive"));
        }
        Ok(RegenParams {
            ell: ell.to_vec(),
            a,
            certify_margin,
        })
    }

    /// `a = 3√d` and `W = horizon / 4`.
    pub fn default_for(ell: &[f64], horizon: u64) -> Result<RegenParams> {
        RegenParams::new(ell, 3.0 * (ell.len() as f64).sqrt(), horizon / 4)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegenerationRecord {
    pub times: Vec<u64>,
    pub positions: Vec<Site>,
    pub censored: Vec<bool>,
    /// Length of the trajectory the record was extracted from.
    pub steps: u64,
}

impl RegenerationRecord {
    pub fn certified(&self) -> usize {
        self.censored.iter().take_while(|c| !**c).count()
    }

    /// `τ_k - τ_{k-1}` for certified `k >= 1`, with `τ_0 = 0`.
    pub fn inter_times(&self) -> Vec<u64> {
        let k = self.certified();
        (0..k)
            .map(|i| self.times[i] - if i == 0 { 0 } else { self.times[i - 1] })
            .collect()
    }

    /// `X_{τ_k} - X_{τ_{k-1}}` for certified `k >= 1`, with `X_{τ_0}` the start.
    pub fn inter_displacements(&self, start: &Site) -> Vec<Site> {
        let k = self.certified();
        (0..k)
            .map(|i| self.positions[i].sub(if i == 0 { start } else { &self.positions[i - 1] }))
            .collect()
    }

    /// CSV rows `walk,k,tau,x_1..x_d,censored`.
    pub fn write_csv_rows<W: Write>(&self, walk: usize, mut w: W) -> std::io::Result<()> {
        for (i, (t, x)) in self.times.iter().zip(&self.positions).enumerate() {
            let cs: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
            writeln!(w, "{walk},{},{t},{},{}", i + 1, cs.join(","), self.censored[i] as u8)?;
        }
        Ok(())
    }
}

pub fn csv_header(dim: usize) -> String {
    let xs: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    format!("walk,k,tau,{},censored", xs.join(","))
}

/// Levels `X_n · ℓ` of a trajectory.
pub fn levels(traj: &Trajectory, ell: &[f64]) -> Vec<f64> {
    traj.positions().map(|x| x.dot(ell)).collect()
}

/// Extract `τ_1 < τ_2 < ...` by running the `S_k / R_k / M_k` recursion,
/// restarted at each regeneration.
pub fn extract(traj: &Trajectory, params: &RegenParams) -> RegenerationRecord {
    let lv = levels(traj, &params.ell);
    let positions: Vec<Site> = traj.positions().collect();
    extract_from_levels(&lv, &positions, params)
}

fn extract_from_levels(lv: &[f64], positions: &[Site], params: &RegenParams) -> RegenerationRecord {
    let n = lv.len() - 1;
    // suffix minimum: smin[i] = min_{m >= i} λ_m
    let mut smin = vec![f64::INFINITY; n + 2];
    for i in (0..=n).rev() {
        smin[i] = smin[i + 1].min(lv[i]);
    }
    let mut rec = RegenerationRecord {
        times: Vec::new(),
        positions: Vec::new(),
        censored: Vec::new(),
        steps: n as u64,
    };
    let mut origin = 0usize;
    let mut censored = false;
    'outer: loop {
        let mut m = lv[origin];
        let mut i = origin;
        loop {
            // S: first time the level exceeds M + a
            let target = m + params.a + LEVEL_TOL;
            while i <= n && lv[i] <= target {
                i += 1;
            }
            if i > n {
                break 'outer;
            }
            let s = i;
            let floor = lv[s] - LEVEL_TOL;
            if smin[s] >= floor {
                censored |= ((n - s) as u64) < params.certify_margin;
                rec.times.push(s as u64);
                rec.positions.push(positions[s]);
                rec.censored.push(censored);
                origin = s;
                continue 'outer;
            }
            // R: first backtrack below λ_S; M: running maximum up to R
            let mut r = s + 1;
            m = m.max(lv[s]);
            while lv[r] >= floor {
                m = m.max(lv[r]);
                r += 1;
            }
            i = r + 1;
        }
    }
    rec
}

/// Whether the walk never drops below its starting level; `None` when the
/// trajectory is shorter than the margin.
pub fn is_zero_regen(traj: &Trajectory, ell: &[f64], margin: u64) -> Option<bool> {
    let lv = levels(traj, ell);
    let floor = lv[0] - LEVEL_TOL;
    if lv.iter().any(|&x| x < floor) {
        return Some(false);
    }
    ((lv.len() as u64 - 1) >= margin).then_some(true)
}

/// `X*(n) = max_{τ_{n-1} <= k <= τ_n} |X_k - X_{τ_{n-1}}|_1` per certified interval.
pub fn regeneration_radii(rec: &RegenerationRecord, traj: &Trajectory) -> Result<Vec<i64>> {
    let k = rec.certified();
    if k == 0 {
        return Err(Error::InsufficientData("no certified regeneration".into()));
    }
    let pos: Vec<Site> = traj.positions().collect();
    let mut out = Vec::with_capacity(k);
    let mut prev = 0usize;
    for &t in &rec.times[..k] {
        let t = t as usize;
        let base = pos[prev];
        out.push(pos[prev..=t].iter().map(|x| x.sub(&base).l1()).max().unwrap_or(0));
        prev = t;
    }
    Ok(out)
}

/// Regeneration data of one walk plus its endpoint.
#[derive(Clone, Debug)]
pub struct WalkRegen {
    pub start: Site,
    pub record: RegenerationRecord,
    pub end: Site,
    pub steps: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VelocityReport {
    /// `Σ displacement / Σ time` over certified intervals after the first.
    pub renewal: Vec<f64>,
    /// `v̂ · ℓ` with a batch-means CI.
    pub renewal_along: MeanCi,
    /// Mean of `X_n / n` over walks.
    pub direct: Vec<f64>,
    pub direct_along: MeanCi,
    pub intervals: usize,
    pub walks_used: usize,
    /// `|renewal - direct| <= sqrt(hw_r^2 + hw_d^2)` along `ℓ`.
    pub agree: bool,
}

pub const BATCHES: usize = 32;

/// `walks` annealed walks of `steps` steps from the origin. Walk `w` runs in
/// environment `env_seed(seed, w)` with step seed `walk_seed(seed, w, 0)`.
pub fn annealed_walks(law: &SiteLaw, params: &RegenParams, steps: u64, walks: usize, seed: u64) -> Result<Vec<WalkRegen>> {
    if law.dim() != params.ell.len() {
        return Err(Error::param("ell and law dimensions differ"));
    }
    let stop = StopSpec::steps(steps)?;
    (0..walks as u64)
        .into_par_iter()
        .map(|w| {
            let env = Environment::new(law.clone(), env_seed(seed, w))?;
            let t = run(&env, Site::origin(law.dim()), &stop, walk_seed(seed, w, 0))?;
            Ok(WalkRegen {
                start: t.start,
                record: extract(&t, params),
                end: t.end(),
                steps: t.len() as u64,
            })
        })
        .collect()
}

pub fn renewal_velocity(walks: &[WalkRegen], ell: &[f64]) -> Result<VelocityReport> {
    let d = ell.len();
    let mut num = Vec::new();
    let mut den = Vec::new();
    let mut vec_num = vec![0.0; d];
    let mut used = 0;
    for w in walks {
        if w.record.certified() < 2 {
            continue;
        }
        used += 1;
        let times = w.record.inter_times();
        let disps = w.record.inter_displacements(&w.start);
        for (t, x) in times.iter().zip(&disps).skip(1) {
            num.push(x.dot(ell));
            den.push(*t as f64);
            for (i, v) in vec_num.iter_mut().enumerate() {
                *v += x.coord(i) as f64;
            }
        }
    }
    if num.len() < BATCHES {
        return Err(Error::InsufficientData(format!(
            "{} certified intervals after the first; need {BATCHES}",
            num.len()
        )));
    }
    let total_time: f64 = den.iter().sum();
    let renewal_along = ratio_batch_ci(&num, &den, BATCHES)?;
    let direct_vals: Vec<Vec<f64>> = walks
        .iter()
        .map(|w| w.end.sub(&w.start).as_f64().iter().map(|x| x / w.steps as f64).collect())
        .collect();
    let along: Vec<f64> = direct_vals
        .iter()
        .map(|v| v.iter().zip(ell).map(|(a, b)| a * b).sum())
        .collect();
    let direct_along = batch_means(&along, BATCHES.min(along.len()))?;
    let direct = (0..d)
        .map(|i| direct_vals.iter().map(|v| v[i]).sum::<f64>() / walks.len() as f64)
        .collect();
    let hw = (renewal_along.ci.half_width().powi(2) + direct_along.ci.half_width().powi(2)).sqrt();
    Ok(VelocityReport {
        renewal: vec_num.iter().map(|x| x / total_time).collect(),
        agree: (renewal_along.mean - direct_along.mean).abs() <= hw,
        renewal_along,
        direct,
        direct_along,
        intervals: num.len(),
        walks_used: used,
    })
}

/// KS comparison of the first and second halves of each walk's certified
/// inter-times, the first interval excluded.
pub fn independence_check(walks: &[WalkRegen]) -> Result<KsResult> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for w in walks {
        let t = w.record.inter_times();
        if t.len() < 3 {
            continue;
        }
        let rest = &t[1..];
        let h = rest.len() / 2;
        a.extend(rest[..h].iter().map(|&x| x as f64));
        b.extend(rest[h..2 * h].iter().map(|&x| x as f64));
    }
    ks_two_sample(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Direction;
    use crate::walk::Termination;

    fn traj(start: Site, dirs: &[usize]) -> Trajectory {
        let d = start.dim();
        Trajectory {
            start,
            steps: dirs.iter().map(|&i| Direction::new(i, d)).collect(),
            horizon: dirs.len() as u64,
            terminated_by: Termination::BudgetExhausted,
        }
    }

    #[test]
    fn forward_walk_regenerates_every_four_steps() {
        let t = traj(Site::origin(2), &[0; 40]);
        let p = RegenParams::with_any_a(&[1.0, 0.0], 3.0, 0).unwrap();
        let r = extract(&t, &p);
        assert_eq!(r.times[0], 4);
        assert!(r.inter_times().iter().all(|&x| x == 4));
        assert_eq!(r.times.len(), 10);
        assert!(regeneration_radii(&r, &t).unwrap().iter().all(|&x| x == 4));
    }

    #[test]
    fn margin_censors_late_candidates() {
        let t = traj(Site::origin(2), &[0; 40]);
        let p = RegenParams::with_any_a(&[1.0, 0.0], 3.0, 10).unwrap();
        let r = extract(&t, &p);
        // candidates at 4, 8, ..., 40; those after step 30 have < 10 steps left
        assert_eq!(r.certified(), 7);
        assert!(r.censored[7..].iter().all(|&c| c));
    }

    #[test]
    fn backtracking_blocks_regeneration() {
        // four steps forward, then back to the start, repeatedly
        let mut dirs = Vec::new();
        for _ in 0..10 {
            dirs.extend([0, 0, 0, 0, 2, 2, 2, 2, 2]);
        }
        let t = traj(Site::new(&[0]), &dirs.iter().map(|&i| i / 2).collect::<Vec<_>>());
        let p = RegenParams::with_any_a(&[1.0], 3.0, 0).unwrap();
        let r = extract(&t, &p);
        assert_eq!(r.certified(), 0);
    }

    #[test]
    fn zigzag_example() {
        // levels 0 1 2 3 4 3 4 5 6 7 8 ...: the step back at 5 kills the
        // candidate at 4; M = 4 so the next candidate is the first level > 7
        let mut dirs = vec![0, 0, 0, 0, 1, 0];
        dirs.extend([0; 10]);
        let t = traj(Site::new(&[0]), &dirs);
        let p = RegenParams::with_any_a(&[1.0], 3.0, 0).unwrap();
        let r = extract(&t, &p);
        // level 8 is first reached at time 10
        assert_eq!(r.times[0], 10);
    }

    #[test]
    fn default_a_is_inside_interval() {
        let h = 1.0 / 2f64.sqrt();
        let p = RegenParams::default_for(&[h, h], 1000).unwrap();
        assert!((p.a - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.certify_margin, 250);
        assert!(RegenParams::new(&[1.0, 0.0], 2.0, 0).is_err());
    }

    #[test]
    fn renewal_velocity_of_forward_walks() {
        let walks: Vec<WalkRegen> = (0..40)
            .map(|_| {
                let t = traj(Site::origin(2), &[0; 100]);
                let p = RegenParams::with_any_a(&[1.0, 0.0], 3.0, 0).unwrap();
                WalkRegen {
                    start: t.start,
                    record: extract(&t, &p),
                    end: t.end(),
                    steps: 100,
                }
            })
            .collect();
        let v = renewal_velocity(&walks, &[1.0, 0.0]).unwrap();
        assert_eq!(v.renewal, vec![1.0, 0.0]);
        assert_eq!(v.direct, vec![1.0, 0.0]);
        assert!(v.agree);
        assert!(renewal_velocity(&walks[..0], &[1.0, 0.0]).is_err());
    }
}
