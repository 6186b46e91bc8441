//! One function per experiment family. Each writes its files through a
//! [`Sink`] and returns the one-line summary printed by the binary.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use rwre_core::criteria::discovery::{EPrimePolicy, FixedPolicy};
use rwre_core::criteria::effective::{PolynomialParams, SlabParams, TiltChoice};
use rwre_core::criteria::moments::MomentRun;
use rwre_core::criteria::paths::AttainabilityParams;
use rwre_core::criteria::{
    attainability, discover, moment_conditions, paths, polynomial_condition, slab_exit, tilted_box_exit,
    DiscoveryPolicy, MomentSpec,
};
use rwre_core::hypercube::{self, CornerChoice, FractionalMomentParams};
use rwre_core::regeneration::{self, annealed_walks, independence_check, renewal_velocity, BATCHES};
use rwre_core::rng::{env_seed, walk_seed};
use rwre_core::stats::{batch_means, fmt17};
use rwre_core::walk::{run, StopSpec};
use rwre_core::{Environment, Error, RegenParams, Result, Site, UnitHypercube};

use crate::config::ExperimentConfig;
use crate::output::Sink;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A single value is repeated `n` times; otherwise the length must be `n`.
fn broadcast(xs: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match xs.len() {
        1 => Ok(vec![xs[0]; n]),
        k if k == n => Ok(xs.to_vec()),
        k => Err(Error::param(format!("{what}: expected 1 or {n} values, got {k}"))),
    }
}

pub fn walk(cfg: &ExperimentConfig, sink: &Sink) -> Result<String> {
    let w = &cfg.walk;
    let d = cfg.law.dim();
    let stop = StopSpec::steps(w.steps)?;
    let ell = cfg.unit_ell();
    let trajs = (0..w.walks as u64)
        .into_par_iter()
        .map(|i| {
            let env = Environment::new(cfg.law.clone(), env_seed(cfg.seed, i))?;
            run(&env, Site::origin(d), &stop, walk_seed(cfg.seed, i, 0))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    let mut body = format!("walk,steps,{},level\n", xs.join(","));
    let mut along = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        let end = t.end();
        let cs: Vec<String> = end.coords().iter().map(|c| c.to_string()).collect();
        let level = end.dot(&ell);
        along.push(level / t.len().max(1) as f64);
        body += &format!("{i},{},{},{}\n", t.len(), cs.join(","), fmt17(level));
    }
    sink.csv("walks.csv", &body)?;
    for (i, t) in trajs.iter().take(w.trace).enumerate() {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).map_err(|e| Error::param(e.to_string()))?;
        sink.csv(&format!("trajectory_{i}.csv"), &String::from_utf8_lossy(&buf))?;
    }
    let v = batch_means(&along, BATCHES.min(along.len()))?;
    sink.json("walk.json", &json!({"walks": w.walks, "steps": w.steps, "ell": ell, "velocity_along_ell": v}))?;
    Ok(format!(
        "walk: X_n·ℓ/n = {:.4} [{:.4}, {:.4}] over {} walks of {} steps",
        v.mean, v.ci.lo, v.ci.hi, w.walks, w.steps
    ))
}

pub fn regen(cfg: &ExperimentConfig, sink: &Sink) -> Result<String> {
    let r = &cfg.regen;
    let d = cfg.law.dim() as f64;
    let ell = cfg.unit_ell();
    let params = RegenParams::new(&ell, r.a.unwrap_or(3.0 * d.sqrt()), r.margin.unwrap_or(r.steps / 4))?;
    let walks = annealed_walks(&cfg.law, &params, r.steps, r.walks, cfg.seed)?;
    let mut body = regeneration::csv_header(cfg.law.dim()) + "\n";
    for (i, w) in walks.iter().enumerate() {
        let mut buf = Vec::new();
        w.record.write_csv_rows(i, &mut buf).map_err(|e| Error::param(e.to_string()))?;
        body += &String::from_utf8_lossy(&buf);
    }
    sink.csv("regenerations.csv", &body)?;
    let v = renewal_velocity(&walks, &ell)?;
    let ks = independence_check(&walks).ok();
    let renewal_dot = dot(&v.renewal, &cfg.ell);
    let direct_dot = dot(&v.direct, &cfg.ell);
    sink.json(
        "velocity.json",
        &json!({
            "params": params,
            "velocity": v,
            "renewal_dot_ell": renewal_dot,
            "direct_dot_ell": direct_dot,
            "inter_time_ks": ks,
        }),
    )?;
    Ok(format!(
        "regen: v·ℓ renewal {renewal_dot:.4}, direct {direct_dot:.4}, {} certified intervals, agree={}",
        v.intervals, v.agree
    ))
}

#[derive(Serialize)]
struct HypercubeSummary {
    replicates: usize,
    mean_exit_origin: f64,
    identity_failures: usize,
    exit_rate_bound_failures: usize,
}

fn corner_choice(s: &str, d: usize) -> Result<CornerChoice> {
    if s == "max" {
        return Ok(CornerChoice::Max);
    }
    let m: usize = s.parse().map_err(|_| Error::param(format!("corner must be \"max\" or a mask, got {s}")))?;
    if m >= 1 << d {
        return Err(Error::param("corner mask out of range"));
    }
    Ok(CornerChoice::Corner(m))
}

pub fn hypercube(cfg: &ExperimentConfig, sink: &Sink) -> Result<String> {
    let h = &cfg.hypercube;
    let d = cfg.law.dim();
    if h.moments == 0 || h.replicates == 0 {
        return Err(Error::param("moments and replicates must be positive"));
    }
    let cube = UnitHypercube::at(Site::origin(d));
    let analyses = (0..h.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let env = Environment::new(cfg.law.clone(), env_seed(cfg.seed, r))?;
            hypercube::analyze(&env, cube, h.moments)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut body = hypercube::csv_header(d, h.moments) + "\n";
    for (r, a) in analyses.iter().enumerate() {
        body += &hypercube::csv_row(r as u64, a);
        body.push('\n');
    }
    sink.csv("hypercube.csv", &body)?;
    let summary = HypercubeSummary {
        replicates: h.replicates,
        mean_exit_origin: analyses.iter().map(|a| a.mean_exit[0]).sum::<f64>() / analyses.len() as f64,
        identity_failures: analyses.iter().map(|a| a.identity_failures(1e-10).len()).sum(),
        exit_rate_bound_failures: analyses.iter().filter(|a| !a.exit_rate_bound_holds(d)).count(),
    };
    let mut line = format!(
        "hypercube: mean exit from 0 = {} over {} replicates, {} identity failures",
        fmt17(summary.mean_exit_origin),
        h.replicates,
        summary.identity_failures
    );
    let fractional = match h.fractional {
        Some(alpha) => {
            let p = FractionalMomentParams {
                alpha,
                replicates: h.replicates,
                corner: corner_choice(&h.corner, d)?,
                walks: h.walks,
                walk_budget: h.walk_budget,
                seed: cfg.seed,
                hill_k: h.hill_k,
            };
            let rep = hypercube::fractional_moment(&cfg.law, &p)?;
            line += &format!(", moment α={alpha}: {:?}", rep.verdict);
            Some(rep)
        }
        None => None,
    };
    let visits = match h.visit_runs {
        Some(runs) => {
            let env = Environment::new(cfg.law.clone(), env_seed(cfg.seed, 0))?;
            let rep = hypercube::visit_law_check(&env, cube, 0, runs, walk_seed(cfg.seed, 0, 0))?;
            line += &format!(", N(0) chi-square p = {:.3}", rep.chi_square.p_value);
            Some(rep)
        }
        None => None,
    };
    sink.json("hypercube.json", &json!({"summary": summary, "fractional": fractional, "visits": visits}))?;
    Ok(line)
}

fn policy(name: &str, d: usize, phi: &[f64], corner_mark: f64) -> Result<Box<dyn DiscoveryPolicy>> {
    match name {
        "eprime" => Ok(Box::new(EPrimePolicy::with_default_delta(d, broadcast(phi, 2 * d, "phi")?)?)),
        "origin" => Ok(Box::new(FixedPolicy::new(Site::origin(d), vec![0.0; 1 << d])?)),
        "fixed" => Ok(Box::new(FixedPolicy::single_corner(d, 0, corner_mark)?)),
        other => Err(Error::param(format!("unknown policy {other}; use eprime, origin or fixed"))),
    }
}

pub fn criteria(cfg: &ExperimentConfig, sink: &Sink) -> Result<String> {
    let c = &cfg.criteria;
    let d = cfg.law.dim();
    let run_spec = MomentRun {
        replicates: c.replicates,
        seed: cfg.seed,
        hill_k: c.hill_k,
    };
    let moments = |spec: MomentSpec, pol: Option<&dyn DiscoveryPolicy>| moment_conditions(&cfg.law, &spec, &run_spec, pol);
    let report = match c.criterion.as_str() {
        "e0" => moments(MomentSpec::E0 { eta: broadcast(&c.exponents, 2 * d, "exponents")? }, None)?,
        "eprime1" => moments(MomentSpec::EPrime1 { phi: broadcast(&c.phi, 2 * d, "phi")? }, None)?,
        "eprime1-probe" => moments(MomentSpec::EPrime1Probe { exponent: c.exponent }, None)?,
        "ktilde1" => moments(
            MomentSpec::KTilde1 {
                exponent: c.exponent,
                q_floor: c.q_floor,
            },
            None,
        )?,
        "k" => {
            let mark = c.alpha + c.eps;
            let pol = policy(&c.policy, d, &c.phi, mark)?;
            let gammas = match c.policy.as_str() {
                "eprime" => EPrimePolicy::with_default_delta(d, broadcast(&c.phi, 2 * d, "phi")?)?.gammas(d),
                _ => {
                    let mut g = vec![0.0; 1 << d];
                    g[0] = mark;
                    g
                }
            };
            moments(
                MomentSpec::K {
                    alpha: c.alpha,
                    eps: c.eps,
                    gammas,
                },
                Some(pol.as_ref()),
            )?
        }
        "pm" => polynomial_condition(
            &cfg.law,
            &PolynomialParams {
                ell: cfg.ell.clone(),
                m: c.m,
                l: c.l.clone(),
                walk_budget: c.walk_budget,
                replicates: c.replicates,
                seed: cfg.seed,
            },
        )?,
        "slab" => {
            let tilt = match c.tilt.as_str() {
                "none" => TiltChoice::None,
                "cramer" => TiltChoice::Cramer { samples: 100_000 },
                s => TiltChoice::Fixed(s.parse().map_err(|_| Error::param(format!("tilt must be none, cramer or a number, got {s}")))?),
            };
            slab_exit(
                &cfg.law,
                &SlabParams {
                    ell: cfg.ell.clone(),
                    b: c.b,
                    l: c.l.clone(),
                    gamma: c.gamma,
                    walk_budget: c.walk_budget,
                    replicates: c.replicates,
                    seed: cfg.seed,
                    tilt,
                    neighborhood: c.neighborhood,
                },
            )?
            .to_report()
        }
        "tilted-box" => {
            let env = Environment::new(cfg.law.clone(), env_seed(cfg.seed, 0))?;
            let l = *c.l.first().ok_or_else(|| Error::param("tilted-box needs one L"))?;
            let rep = tilted_box_exit(&env, Site::origin(d), c.beta, l, &cfg.unit_ell(), c.walk_budget, c.runs, cfg.seed)?;
            sink.json("criterion.json", &rep)?;
            return Ok(format!(
                "tilted-box: front exit {:.4} [{:.4}, {:.4}], {} censored of {}",
                rep.estimate.value, rep.estimate.ci_low, rep.estimate.ci_high, rep.censored, rep.runs
            ));
        }
        other => return Err(Error::param(format!("unknown criterion {other}"))),
    };
    sink.json("criterion.json", &report)?;
    let verdict = serde_json::to_value(report.verdict).unwrap();
    Ok(format!("criteria {}: {}", report.criterion, verdict.as_str().unwrap_or_default()))
}

pub fn paths_cmd(cfg: &ExperimentConfig, sink: &Sink) -> Result<String> {
    let p = &cfg.paths;
    let d = cfg.law.dim();
    let pol = policy(&p.policy, d, &p.phi, 0.0)?;
    let bundles = (0..p.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let env = Environment::new(cfg.law.clone(), env_seed(cfg.seed, r))?;
            let mmh = discover(&env, pol.as_ref())?;
            paths(&env, &mmh, p.n)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut body = String::from("replicate,corner,first_exit,qtilde,prod_q,pi,lower_bound\n");
    let mut failures = 0;
    for (r, b) in bundles.iter().enumerate() {
        failures += b.bound_failures(1e-12).len();
        for bp in &b.paths {
            body += &format!(
                "{r},{},{},{},{},{},{}\n",
                bp.corner,
                fmt17(bp.first_exit),
                fmt17(bp.qtilde),
                fmt17(bp.q.iter().product()),
                fmt17(bp.pi),
                fmt17(bp.lower_bound)
            );
        }
    }
    sink.csv("paths.csv", &body)?;
    sink.json("paths.json", &bundles)?;
    let mut line = format!("paths: {} bundles of length {}, {failures} bound failures", bundles.len(), p.n);
    if !p.u.is_empty() {
        let ap = AttainabilityParams {
            u: p.u.clone(),
            eta: p.eta,
            delta: p.delta,
            alpha: p.alpha,
            eps: p.eps,
            replicates: p.replicates,
            seed: cfg.seed,
        };
        let pts = attainability(&cfg.law, pol.as_ref(), &ap)?;
        let within = pts.iter().filter(|x| x.within_benchmark).count();
        line += &format!(", attainability within benchmark at {within}/{} grid points", pts.len());
        sink.json("attainability.json", &pts)?;
    }
    Ok(line)
}
