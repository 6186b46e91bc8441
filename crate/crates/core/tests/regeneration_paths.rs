use proptest::prelude::*;

use std::collections::HashMap;
use std::sync::Mutex;

use rwre_core::environment::{Medium, TransitionVector};
use rwre_core::lattice::Direction;
use rwre_core::regeneration::{
    annealed_walks, extract, independence_check, is_zero_regen, levels, regeneration_radii, renewal_velocity,
};
use rwre_core::rng::{env_seed, walk_seed};
use rwre_core::walk::{run, Walker};
use rwre_core::{Environment, StopSpec, UnitHypercube};
use rwre_core::stats::hill;
use rwre_core::{RegenParams, Site, SiteLaw, Termination, Trajectory};

fn path(dirs: &[usize], d: usize) -> Trajectory {
    Trajectory {
        start: Site::origin(d),
        steps: dirs.iter().map(|&i| Direction::new(i, d)).collect(),
        horizon: dirs.len() as u64,
        terminated_by: Termination::BudgetExhausted,
    }
}

/// Direction indices in `Z^2`, forward moves three times as likely.
fn steps() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(prop_oneof![3 => Just(0usize), 1 => Just(1), 1 => Just(2), 1 => Just(3)], 1..600)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn regenerations_are_fresh_maxima_never_revisited(dirs in steps(), a in 0.5f64..6.0, margin in 0u64..200) {
        let t = path(&dirs, 2);
        let ell = [1.0, 0.0];
        let rec = extract(&t, &RegenParams::with_any_a(&ell, a, margin).unwrap());
        let lv = levels(&t, &ell);
        let n = lv.len() - 1;
        let mut prev = 0u64;
        for (k, &tau) in rec.times.iter().enumerate() {
            let tau_u = tau as usize;
            prop_assert!(k == 0 || tau > prev);
            prop_assert!(lv[..tau_u].iter().all(|&x| x < lv[tau_u]));
            prop_assert!(lv[tau_u..].iter().all(|&x| x >= lv[tau_u]));
            prop_assert_eq!(rec.positions[k], t.positions().nth(tau_u).unwrap());
            prev = tau;
        }
        // censoring starts at the first candidate with a short window and
        // never ends
        let first = rec.censored.iter().position(|c| *c).unwrap_or(rec.times.len());
        prop_assert!(rec.censored[first..].iter().all(|c| *c));
        for (k, &tau) in rec.times.iter().enumerate() {
            let short = ((n as u64) - tau) < margin;
            if k < first {
                prop_assert!(!short);
            } else if k == first {
                prop_assert!(short);
            }
        }
        prop_assert_eq!(rec.inter_times().iter().sum::<u64>(), rec.times.get(rec.certified().wrapping_sub(1)).copied().unwrap_or(0));
    }

    #[test]
    fn radius_bounds_displacement(dirs in steps()) {
        let t = path(&dirs, 2);
        let rec = extract(&t, &RegenParams::with_any_a(&[1.0, 0.0], 1.0, 0).unwrap());
        if rec.certified() > 0 {
            let radii = regeneration_radii(&rec, &t).unwrap();
            for (r, x) in radii.iter().zip(rec.inter_displacements(&t.start)) {
                prop_assert!(*r >= x.l1());
            }
        }
    }
}

#[test]
fn renewal_velocity_of_the_explicit_law() {
    // X_n · (1,1) is a ±1 walk with up-probability 1 - eps, so v · (1,1) = 1 - 2 eps
    let law = SiteLaw::expl(2, 0.2);
    let s = 0.5f64.sqrt();
    let ell = [s, s];
    let steps = 20_000;
    let params = RegenParams::default_for(&ell, steps).unwrap();
    let walks = annealed_walks(&law, &params, steps, 60, 77).unwrap();
    let rep = renewal_velocity(&walks, &ell).unwrap();
    let exact = 0.6 * s;
    let hw = rep.renewal_along.ci.half_width();
    assert!((rep.renewal_along.mean - exact).abs() < 2.0 * hw, "{} ± {hw}", rep.renewal_along.mean);
    let hw = rep.direct_along.ci.half_width();
    assert!((rep.direct_along.mean - exact).abs() < 2.0 * hw, "{} ± {hw}", rep.direct_along.mean);
    assert!(rep.agree);
    assert!(independence_check(&walks).unwrap().passes());
}

#[test]
fn drifted_law_regenerates_consistently() {
    let law = SiteLaw::UniformDrift {
        dim: 2,
        kappa: 0.05,
        axis: 0,
        strength: 2.0,
    };
    let ell = [1.0, 0.0];
    let steps = 20_000;
    let params = RegenParams::default_for(&ell, steps).unwrap();
    let walks = annealed_walks(&law, &params, steps, 60, 78).unwrap();
    let rep = renewal_velocity(&walks, &ell).unwrap();
    assert!(rep.renewal_along.mean > 0.0);
    assert!(rep.agree, "{:?} vs {:?}", rep.renewal_along, rep.direct_along);
    assert!(independence_check(&walks).unwrap().passes());
    // the vector estimate and its projection are the same number
    assert!((rep.renewal[0] - rep.renewal_along.mean).abs() < 0.05 * rep.renewal_along.mean);
}

fn inter_time_tail(law: &SiteLaw, ell: &[f64], seed: u64) -> f64 {
    let steps = 50_000;
    let params = RegenParams::default_for(ell, steps).unwrap();
    let walks = annealed_walks(law, &params, steps, 100, seed).unwrap();
    let times: Vec<f64> = walks.iter().flat_map(|w| w.record.inter_times().into_iter().skip(1).map(|t| t as f64)).collect();
    hill(&times, None).unwrap().index
}

#[test]
fn inter_time_tails() {
    let drifted = SiteLaw::UniformDrift {
        dim: 2,
        kappa: 0.05,
        axis: 0,
        strength: 2.0,
    };
    let light = inter_time_tail(&drifted, &[1.0, 0.0], 81);
    assert!(light > 2.0, "uniformly elliptic drifted law: {light}");
    let s = 0.5f64.sqrt();
    let expl = inter_time_tail(&SiteLaw::expl(2, 0.2), &[s, s], 82);
    assert!(expl.is_finite() && expl > 1.0, "explicit law: {expl}");
}

/// Annealed survival `P[X >= n]` on a grid.
fn survival(xs: &[u64], grid: &[u64]) -> Vec<f64> {
    grid.iter().map(|&n| xs.iter().filter(|&&x| x >= n).count() as f64 / xs.len() as f64).collect()
}

/// Samples each site once; Dirichlet draws are slow to repeat.
struct Memo(Environment, Mutex<HashMap<Site, TransitionVector>>);

impl Medium for Memo {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn transitions_at(&self, x: &Site) -> TransitionVector {
        *self.1.lock().unwrap().entry(x.clone()).or_insert_with(|| self.0.transitions_at(x))
    }
}

#[test]
fn first_regeneration_dominates_the_hypercube_trap_tail() {
    // P[tau_1 >= n | 0-regeneration] against max_x P_x[T^ex >= n]: both
    // non-increasing, and their ratio bounded away from zero on the grid
    let law = SiteLaw::Dirichlet {
        weights: vec![3.0, 0.6, 0.6, 0.6],
    };
    let ell = [1.0, 0.0];
    let d = 2;
    let grid = [1u64, 2, 4, 8, 16, 32];
    let horizon = 1_000;
    let params = RegenParams::default_for(&ell, horizon).unwrap();
    let stop = StopSpec::steps(horizon).unwrap();
    let mut taus = Vec::new();
    for r in 0..4_000u64 {
        let env = Memo(Environment::new(law.clone(), env_seed(91, r)).unwrap(), Mutex::default());
        let t = run(&env, Site::origin(d), &stop, walk_seed(91, r, 0)).unwrap();
        if is_zero_regen(&t, &ell, params.certify_margin) != Some(true) {
            continue;
        }
        let rec = extract(&t, &params);
        if rec.certified() > 0 {
            taus.push(rec.times[0]);
        }
    }
    assert!(taus.len() > 500, "{} conditioned walks", taus.len());
    let cube = UnitHypercube::at(Site::origin(d));
    let cap = *grid.last().unwrap();
    let mut exits = vec![Vec::new(); cube.n_corners()];
    for r in 0..20_000u64 {
        let env = Memo(Environment::new(law.clone(), env_seed(92, r)).unwrap(), Mutex::default());
        for (x, e) in exits.iter_mut().enumerate() {
            let mut w = Walker::new(cube.corner(x), walk_seed(92, r, x as u64));
            // survival on the grid only needs T^ex capped at its last point
            while cube.contains(&w.position) && w.time < cap {
                w.step(&env);
            }
            e.push(w.time);
        }
    }
    let mut best = vec![0.0; grid.len()];
    for e in &exits {
        for (b, s) in best.iter_mut().zip(survival(e, &grid)) {
            *b = f64::max(*b, s);
        }
    }
    let tau_tail = survival(&taus, &grid);
    for w in tau_tail.windows(2).chain(best.windows(2)) {
        assert!(w[1] <= w[0]);
    }
    let ratios: Vec<f64> = tau_tail.iter().zip(&best).filter(|(_, b)| **b > 0.0).map(|(a, b)| a / b).collect();
    assert!(ratios.len() >= 4, "{best:?}");
    assert!(ratios.iter().all(|r| *r > 0.0), "tau {tau_tail:?} trap {best:?}");
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let params = RegenParams::default_for(&[1.0, 0.0], 100).unwrap();
    assert!(annealed_walks(&SiteLaw::expl(3, 0.2), &params, 100, 2, 1).is_err());
}
