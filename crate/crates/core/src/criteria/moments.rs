//! Negative-moment conditions on transition and exit probabilities.
//!
//! Each condition reduces to "`E[X] < ∞`" for one or more nonnegative
//! random variables `X` of the environment. A replicate gives one sample of
//! each; the verdict on `E[X]` comes from a Hill confidence interval on the
//! tail index of `X`, computed on `ln X` so that huge samples stay finite.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::discovery::{discover, mark_sum, DiscoveryPolicy};
use super::{CriterionReport, EnvSampler, Estimate, Verdict};
use crate::environment::Medium;
use crate::error::{Error, Result};
use crate::hypercube::QuenchedHypercube;
use crate::lattice::{Direction, Site, UnitHypercube};
use crate::rng::env_seed;
use crate::stats::{log_moment_verdict, MomentVerdict};

/// Which condition to probe, with its exponents. Direction-indexed vectors
/// use the order `e_1..e_d, -e_1..-e_d`; corner-indexed ones use masks.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentSpec {
    /// `E[p(0,e)^{-η_e}] < ∞` for every `e`.
    E0 { eta: Vec<f64> },
    /// The `(E')_1` exponents `φ`: admissibility plus, for every `e`,
    /// `E[Π_{e'≠e} p(0,e')^{-φ(e')}] < ∞`.
    EPrime1 { phi: Vec<f64> },
    /// Necessary-condition probe: `E[p(0,e)^{-s}]` for every `e`. Infinite
    /// for all `e` at `s = 1/(4d)` rules `(E')_1` out.
    EPrime1Probe { exponent: f64 },
    /// `min_x E[(Q_x^𝔥)^{-s}] < ∞`, optionally checking `Q_x >= q_floor` on
    /// every sample.
    KTilde1 { exponent: f64, q_floor: Option<f64> },
    /// The three parts of `(K)_α`, marks from the discovery policy.
    K { alpha: f64, eps: f64, gammas: Vec<f64> },
}

/// Replicates, master seed and Hill `k` shared by all moment probes.
#[derive(Clone, Debug, Serialize)]
pub struct MomentRun {
    pub replicates: usize,
    pub seed: u64,
    pub hill_k: Option<usize>,
}

impl MomentSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            MomentSpec::E0 { .. } => "E0",
            MomentSpec::EPrime1 { .. } => "E'1",
            MomentSpec::EPrime1Probe { .. } => "E'1-probe",
            MomentSpec::KTilde1 { .. } => "K~1",
            MomentSpec::K { .. } => "K_alpha",
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let positive = |v: &[f64], len: usize, what: &str| {
            if v.len() != len || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                Err(Error::param(format!("{what} must be {len} positive exponents")))
            } else {
                Ok(())
            }
        };
        match self {
            MomentSpec::E0 { eta } => positive(eta, 2 * dim, "eta"),
            MomentSpec::EPrime1 { phi } => positive(phi, 2 * dim, "phi"),
            MomentSpec::EPrime1Probe { exponent } | MomentSpec::KTilde1 { exponent, .. } => {
                positive(&[*exponent], 1, "exponent")
            }
            MomentSpec::K { alpha, eps, gammas } => {
                positive(&[*alpha, *eps], 2, "alpha and eps")?;
                if gammas.len() != 1 << dim || gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err(Error::param("gammas must be 2^d nonnegative numbers"));
                }
                Ok(())
            }
        }
    }
}

/// What one environment replicate contributes.
struct Sample {
    /// `p(0, e)` by direction index.
    origin: Vec<f64>,
    /// `Q_x^𝔥` by corner mask.
    q: Vec<f64>,
    /// `(ln Π Q̃^{-α_x}, mark sum, audit passed)`.
    marked: Option<(f64, f64, bool)>,
}

fn sample<M: Medium>(env: &M, gammas: Option<&[f64]>, policy: Option<&dyn DiscoveryPolicy>) -> Result<Sample> {
    let d = env.dim();
    let origin = Site::origin(d);
    let tv = env.transitions_at(&origin);
    let qh = QuenchedHypercube::new(env, UnitHypercube::at(origin))?;
    let marked = match (gammas, policy) {
        (Some(g), Some(pol)) => {
            let mmh = discover(env, pol)?;
            let ok = mmh.audit().is_ok();
            Some((mmh.log_weighted_escape(env)?, mark_sum(&mmh, g)?, ok))
        }
        _ => None,
    };
    Ok(Sample {
        origin: Direction::all(d).map(|e| tv.p(e)).collect(),
        q: (0..qh.n()).map(|m| qh.q(m)).collect(),
        marked,
    })
}

/// Verdict and estimates for `E[X] < ∞` from samples of `ln X`.
struct Part {
    verdict: MomentVerdict,
    estimates: Vec<Estimate>,
}

fn finite_mean_part(name: &str, logs: &[f64], hill_k: Option<usize>) -> Result<Part> {
    let n = logs.len() as u64;
    if logs.iter().any(|l| l.is_infinite() && *l > 0.0) {
        // a sample with X = ∞: the probability is not elliptic here
        return Ok(Part {
            verdict: MomentVerdict::MomentAppearsInfinite,
            estimates: vec![Estimate::new(format!("{name}: infinite samples"), 1.0, None, n, 0)],
        });
    }
    let (verdict, tail) = log_moment_verdict(logs, 1.0, hill_k)?;
    let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut estimates = vec![Estimate::new(format!("{name}: max ln X"), max_log, None, n, 0)];
    match &tail {
        Some(t) => estimates.push(Estimate::new(format!("{name}: tail index"), t.index, Some(t.ci), n, 0)),
        None => estimates.push(Estimate::new(format!("{name}: tail index"), f64::INFINITY, None, n, 0)),
    }
    Ok(Part { verdict, estimates })
}

/// Monte Carlo probe of one moment condition over `run.replicates`
/// environments. `policy` supplies the marked hypercube for
/// [`MomentSpec::K`] and is ignored otherwise.
pub fn moment_conditions<S: EnvSampler>(
    sampler: &S,
    spec: &MomentSpec,
    run: &MomentRun,
    policy: Option<&dyn DiscoveryPolicy>,
) -> Result<CriterionReport> {
    let d = sampler.dim();
    spec.validate(d)?;
    if run.replicates == 0 {
        return Err(Error::param("need at least one replicate"));
    }
    let gammas = match spec {
        MomentSpec::K { gammas, .. } => {
            if policy.is_none() {
                return Err(Error::param("(K)_alpha needs a discovery policy"));
            }
            Some(gammas.as_slice())
        }
        _ => None,
    };
    let samples: Vec<Sample> = (0..run.replicates)
        .into_par_iter()
        .map(|r| {
            let env = sampler.realize(env_seed(run.seed, r as u64))?;
            sample(&env, gammas, policy)
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as u64;
    let mut estimates = Vec::new();
    let mut notes = Vec::new();
    let dir_name = |i: usize| format!("{:?}", Direction::new(i, d));

    let verdict = match spec {
        MomentSpec::E0 { eta } => {
            let mut parts = Vec::new();
            for (i, &h) in eta.iter().enumerate() {
                let logs: Vec<f64> = samples.iter().map(|s| -h * s.origin[i].ln()).collect();
                let p = finite_mean_part(&format!("E[p(0,{})^-{h}]", dir_name(i)), &logs, run.hill_k)?;
                parts.push(Verdict::from_finite(p.verdict));
                estimates.extend(p.estimates);
            }
            Verdict::all(parts)
        }
        MomentSpec::EPrime1 { phi } => {
            let sup = (0..d).map(|i| phi[i] + phi[i + d]).fold(0.0, f64::max);
            let margin = 2.0 * phi.iter().sum::<f64>() - sup - 1.0;
            estimates.push(Estimate::exact("2 sum phi - sup(phi(e)+phi(-e)) - 1", margin));
            let mut parts = vec![if margin > 0.0 {
                Verdict::SatisfiedEmpirically
            } else {
                Verdict::ViolatedEmpirically
            }];
            for e in 0..2 * d {
                let logs: Vec<f64> = samples
                    .iter()
                    .map(|s| (0..2 * d).filter(|&j| j != e).map(|j| -phi[j] * s.origin[j].ln()).sum())
                    .collect();
                let p = finite_mean_part(&format!("E[prod_(e'!={}) p^-phi]", dir_name(e)), &logs, run.hill_k)?;
                parts.push(Verdict::from_finite(p.verdict));
                estimates.extend(p.estimates);
            }
            Verdict::all(parts)
        }
        MomentSpec::EPrime1Probe { exponent } => {
            let mut infinite = 0;
            let mut finite = 0;
            for i in 0..2 * d {
                let logs: Vec<f64> = samples.iter().map(|s| -exponent * s.origin[i].ln()).collect();
                let p = finite_mean_part(&format!("E[p(0,{})^-{exponent}]", dir_name(i)), &logs, run.hill_k)?;
                match p.verdict {
                    MomentVerdict::MomentAppearsInfinite => infinite += 1,
                    MomentVerdict::MomentAppearsFinite => finite += 1,
                    MomentVerdict::Inconclusive => {}
                }
                estimates.extend(p.estimates);
            }
            notes.push("violated: the probe moment appears infinite in every direction".into());
            if infinite == 2 * d {
                Verdict::ViolatedEmpirically
            } else if finite == 2 * d {
                Verdict::SatisfiedEmpirically
            } else {
                Verdict::Inconclusive
            }
        }
        MomentSpec::KTilde1 { exponent, q_floor } => {
            let mut best = Verdict::ViolatedEmpirically;
            for m in 0..1usize << d {
                let logs: Vec<f64> = samples.iter().map(|s| -exponent * s.q[m].ln()).collect();
                let p = finite_mean_part(&format!("E[Q_{m}^-{exponent}]"), &logs, run.hill_k)?;
                best = match (best, Verdict::from_finite(p.verdict)) {
                    (_, Verdict::SatisfiedEmpirically) | (Verdict::SatisfiedEmpirically, _) => Verdict::SatisfiedEmpirically,
                    (_, Verdict::Inconclusive) | (Verdict::Inconclusive, _) => Verdict::Inconclusive,
                    _ => Verdict::ViolatedEmpirically,
                };
                estimates.extend(p.estimates);
            }
            let min_q = samples.iter().flat_map(|s| s.q.iter().copied()).fold(f64::INFINITY, f64::min);
            estimates.push(Estimate::new("min Q_x over samples", min_q, None, n, 0));
            if let Some(f) = q_floor {
                let below = samples.iter().filter(|s| s.q.iter().any(|q| *q < *f)).count();
                estimates.push(Estimate::new(format!("samples with some Q_x < {f}"), below as f64, None, n, 0));
                notes.push(format!("Q_x >= {f} holds on {} of {n} samples", n as usize - below));
            }
            best
        }
        MomentSpec::K { alpha, eps, gammas } => {
            let mut parts = Vec::new();
            for (m, &g) in gammas.iter().enumerate().filter(|(_, g)| **g > 0.0) {
                let logs: Vec<f64> = samples.iter().map(|s| -g * s.q[m].ln()).collect();
                let p = finite_mean_part(&format!("part 1: E[Q_{m}^-{g}]"), &logs, run.hill_k)?;
                parts.push(Verdict::from_finite(p.verdict));
                estimates.extend(p.estimates);
            }
            let marked: Vec<(f64, f64, bool)> = samples.iter().map(|s| s.marked.unwrap()).collect();
            let logs: Vec<f64> = marked.iter().map(|m| m.0).collect();
            let p = finite_mean_part("part 2: E[prod Q~^-alpha_x]", &logs, run.hill_k)?;
            parts.push(Verdict::from_finite(p.verdict));
            estimates.extend(p.estimates);
            let target = alpha + eps;
            let short = marked.iter().filter(|m| m.1 < target - 1e-12).count();
            let min_sum = marked.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            estimates.push(Estimate::new("part 3: min mark sum", min_sum, None, n, 0));
            estimates.push(Estimate::new(format!("part 3: samples with mark sum < {target}"), short as f64, None, n, 0));
            notes.push(format!("mark-sum bound holds on {} of {n} samples (not an almost-sure check)", n as usize - short));
            parts.push(if short == 0 {
                Verdict::SatisfiedEmpirically
            } else {
                Verdict::ViolatedEmpirically
            });
            let audits = marked.iter().filter(|m| !m.2).count();
            estimates.push(Estimate::new("measurability audit failures", audits as f64, None, n, 0));
            if audits > 0 {
                parts.push(Verdict::ViolatedEmpirically);
            }
            Verdict::all(parts)
        }
    };
    Ok(CriterionReport {
        criterion: spec.tag().into(),
        params: json!({
            "spec": spec,
            "replicates": run.replicates,
            "seed": run.seed,
            "hill_k": run.hill_k,
            "policy": policy.map(|p| p.name()),
        }),
        estimates,
        verdict,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::discovery::{EPrimePolicy, FixedPolicy};
    use crate::environment::SiteLaw;

    fn run(replicates: usize) -> MomentRun {
        MomentRun {
            replicates,
            seed: 11,
            hill_k: None,
        }
    }

    #[test]
    fn uniformly_elliptic_law_satisfies_e0() {
        let law = SiteLaw::UniformDrift {
            dim: 2,
            kappa: 0.05,
            axis: 0,
            strength: 1.0,
        };
        let r = moment_conditions(&law, &MomentSpec::E0 { eta: vec![2.0; 4] }, &run(2000), None).unwrap();
        assert_eq!(r.verdict, Verdict::SatisfiedEmpirically);
        for e in r.estimates.iter().filter(|e| e.name.contains("max ln X")) {
            // X <= κ^{-2}
            assert!(e.value <= -2.0 * 0.05f64.ln() + 1e-12);
        }
    }

    #[test]
    fn dirichlet_beta_tail_is_read_correctly() {
        // p(0,e) ~ Beta(1, 3): E[p^-η] < ∞ iff η < 1
        let law = SiteLaw::dirichlet_flat(2);
        let heavy = moment_conditions(&law, &MomentSpec::E0 { eta: vec![2.0; 4] }, &run(20_000), None).unwrap();
        assert_eq!(heavy.verdict, Verdict::ViolatedEmpirically);
        let light = moment_conditions(&law, &MomentSpec::E0 { eta: vec![0.3; 4] }, &run(20_000), None).unwrap();
        assert_eq!(light.verdict, Verdict::SatisfiedEmpirically);
    }

    #[test]
    fn nonpositive_exponent_is_a_parameter_error() {
        let law = SiteLaw::uniform(2);
        let bad = MomentSpec::E0 { eta: vec![1.0, 0.0, 1.0, 1.0] };
        assert!(matches!(moment_conditions(&law, &bad, &run(10), None), Err(Error::Parameter(_))));
        let bad = MomentSpec::KTilde1 {
            exponent: -1.0,
            q_floor: None,
        };
        assert!(matches!(moment_conditions(&law, &bad, &run(10), None), Err(Error::Parameter(_))));
    }

    #[test]
    fn k_alpha_needs_a_policy() {
        let spec = MomentSpec::K {
            alpha: 1.0,
            eps: 0.5,
            gammas: vec![1.5; 4],
        };
        assert!(moment_conditions(&SiteLaw::uniform(2), &spec, &run(10), None).is_err());
    }

    #[test]
    fn eprime_on_a_light_dirichlet_implies_k1() {
        // Dirichlet(1,…,1): E[Π_{e'≠e} p^{-φ}] < ∞ for small φ; φ = 0.3 in
        // d = 2 gives 2(1.2) - 0.6 = 1.8 > 1
        let law = SiteLaw::dirichlet_flat(2);
        let phi = vec![0.3; 4];
        let e = moment_conditions(&law, &MomentSpec::EPrime1 { phi: phi.clone() }, &run(20_000), None).unwrap();
        assert_eq!(e.verdict, Verdict::SatisfiedEmpirically, "{:?}", e.estimates);
        let pol = EPrimePolicy::with_default_delta(2, phi).unwrap();
        let spec = MomentSpec::K {
            alpha: 1.0,
            eps: 0.5,
            gammas: pol.gammas(2),
        };
        let k = moment_conditions(&law, &spec, &run(20_000), Some(&pol)).unwrap();
        assert_eq!(k.verdict, Verdict::SatisfiedEmpirically, "{:?}", k.estimates);
    }

    #[test]
    fn ktilde_passing_implies_fixed_policy_k1() {
        let law = SiteLaw::expl(2, 0.2);
        let eps = 0.5;
        let kt = MomentSpec::KTilde1 {
            exponent: 1.0 + eps,
            q_floor: Some(0.1),
        };
        let r = moment_conditions(&law, &kt, &run(5000), None).unwrap();
        assert_eq!(r.verdict, Verdict::SatisfiedEmpirically);
        let pol = FixedPolicy::single_corner(2, 0, 1.0 + eps).unwrap();
        let mut gammas = vec![0.0; 4];
        gammas[0] = 1.0 + eps;
        let spec = MomentSpec::K { alpha: 1.0, eps, gammas };
        let k = moment_conditions(&law, &spec, &run(5000), Some(&pol)).unwrap();
        assert_eq!(k.verdict, Verdict::SatisfiedEmpirically, "{:?}", k.estimates);
    }
}
