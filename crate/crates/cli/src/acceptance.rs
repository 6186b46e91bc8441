//! The acceptance suite: twelve fixed experiments with pass/fail rules.
//!
//! Every criterion writes one JSON artifact. Criterion 12 runs the other
//! criteria a second time into a sibling directory and compares SHA-256
//! digests of the artifacts file by file.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rwre_core::criteria::discovery::EPrimePolicy;
use rwre_core::criteria::effective::{SlabParams, TiltChoice};
use rwre_core::criteria::moments::MomentRun;
use rwre_core::criteria::{discover, mark_sum, moment_conditions, paths, slab_exit, MomentSpec, Verdict};
use rwre_core::hypercube::{analyze, fractional_moment, visit_law_check, CornerChoice, FractionalMomentParams};
use rwre_core::regeneration::{annealed_walks, independence_check, renewal_velocity};
use rwre_core::rng::{derive, env_seed, walk_seed};
use rwre_core::stats::MomentVerdict;
use rwre_core::walk::Walker;
use rwre_core::{Environment, Error, RegenParams, Result, Site, SiteLaw, UnitHypercube};

use crate::output::Sink;

pub const DEFAULT_SEED: u64 = 20_240_601;

pub const NAMES: [&str; 12] = [
    "ballistic-velocity",
    "zero-speed",
    "hypercube-identities",
    "uniform-golden-values",
    "geometric-visits",
    "regeneration-structure",
    "mark-sum",
    "criterion-discrimination",
    "trap-tail-exponent",
    "path-bundle-bound",
    "slab-decay",
    "determinism",
];

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {:<26} {}  {} ({:.1} s)",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

struct Check {
    pass: bool,
    detail: String,
    values: Value,
}

fn suite_hash(seed: u64) -> String {
    let digest = Sha256::digest(json!({"suite": "acceptance", "seed": seed}).to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn artifact_name(id: usize) -> String {
    format!("c{id:02}_{}.json", NAMES[id - 1])
}

fn run_one(id: usize, seed: u64) -> Result<Check> {
    let s = derive(seed, &[id as u64]);
    match id {
        1 => ballistic_velocity(s),
        2 => zero_speed(s),
        3 => hypercube_identities(s),
        4 => uniform_golden_values(),
        5 => geometric_visits(s),
        6 => regeneration_structure(s),
        7 => mark_sum_identity(s),
        8 => criterion_discrimination(s),
        9 => trap_tail_exponent(s),
        10 => path_bundle_bound(s),
        11 => slab_decay(s),
        _ => Err(Error::param(format!("no criterion {id}"))),
    }
}

/// Runs criteria `1..=11` from `ids` into `dir`, calling `report` after each.
fn run_batch(ids: &[usize], seed: u64, dir: &Path, report: &mut dyn FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    let sink = Sink::new(dir, &suite_hash(seed))?;
    let mut out = Vec::new();
    for &id in ids.iter().filter(|&&i| i <= 11) {
        let t0 = Instant::now();
        let (pass, detail, values) = match run_one(id, seed) {
            Ok(c) => (c.pass, c.detail, c.values),
            Err(e) => (false, format!("error: {e}"), json!({"error": e.to_string()})),
        };
        sink.json(&artifact_name(id), &json!({"criterion": id, "name": NAMES[id - 1], "pass": pass, "values": values}))?;
        let o = Outcome {
            id,
            name: NAMES[id - 1],
            pass,
            detail,
            elapsed: t0.elapsed(),
        };
        report(&o);
        out.push(o);
    }
    Ok(out)
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::param(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the requested criteria (all when `ids` is empty). Artifacts go to
/// `dir/run1`; criterion 12 reruns into `dir/run2`.
pub fn run_suite(ids: &[usize], seed: u64, dir: &Path, report: &mut dyn FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    let ids: Vec<usize> = if ids.is_empty() { (1..=12).collect() } else { ids.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=12).contains(&i)) {
        return Err(Error::param(format!("no criterion {bad}")));
    }
    let first = dir.join("run1");
    let mut outcomes = run_batch(&ids, seed, &first, report)?;
    if ids.contains(&12) {
        let t0 = Instant::now();
        let second = dir.join("run2");
        run_batch(&ids, seed, &second, &mut |_| {})?;
        let mut files: Vec<PathBuf> = ids.iter().filter(|&&i| i <= 11).map(|&i| PathBuf::from(artifact_name(i))).collect();
        files.sort();
        let mut digests = Vec::new();
        let mut mismatched = Vec::new();
        for f in &files {
            let a = digest_file(&first.join(f))?;
            let b = digest_file(&second.join(f))?;
            if a != b {
                mismatched.push(f.display().to_string());
            }
            digests.push(json!({"file": f.display().to_string(), "sha256": a}));
        }
        let pass = mismatched.is_empty();
        let sink = Sink::new(dir, &suite_hash(seed))?;
        sink.json("c12_determinism.json", &json!({"criterion": 12, "pass": pass, "digests": digests, "mismatched": mismatched}))?;
        let o = Outcome {
            id: 12,
            name: NAMES[11],
            pass,
            detail: if pass {
                format!("{} artifacts byte-identical across two runs", files.len())
            } else {
                format!("artifacts differ: {}", mismatched.join(", "))
            },
            elapsed: t0.elapsed(),
        };
        report(&o);
        outcomes.push(o);
    }
    Ok(outcomes)
}

fn expl() -> SiteLaw {
    SiteLaw::expl(2, 0.2)
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn ballistic_velocity(s: u64) -> Result<Check> {
    let ell0 = [1.0, 1.0];
    let unit = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let n = 100_000;
    let walks = annealed_walks(&expl(), &RegenParams::default_for(&unit, n)?, n, 100, s)?;
    let v = renewal_velocity(&walks, &unit)?;
    let renewal: f64 = v.renewal.iter().zip(ell0).map(|(a, b)| a * b).sum();
    let direct: f64 = v.direct.iter().zip(ell0).map(|(a, b)| a * b).sum();
    Ok(Check {
        pass: in_range(renewal, 0.59, 0.61) && in_range(direct, 0.59, 0.61),
        detail: format!("v·ℓ₀ renewal {renewal:.4}, direct {direct:.4}; target [0.59, 0.61]"),
        values: json!({"renewal": renewal, "direct": direct, "intervals": v.intervals, "velocity": v}),
    })
}

fn zero_speed(s: u64) -> Result<Check> {
    let law = SiteLaw::trap_transient(1);
    let scales = [10_000u64, 100_000, 1_000_000];
    let per_walk = (0..200u64)
        .into_par_iter()
        .map(|w| {
            let env = Environment::new(law.clone(), env_seed(s, w))?;
            let mut walker = Walker::new(Site::origin(2), walk_seed(s, w, 0));
            Ok(scales.map(|n| walker.advance_to(&env, n).coord(1) as f64 / n as f64))
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    let v: Vec<f64> = (0..3).map(|i| per_walk.iter().map(|r| r[i]).sum::<f64>() / per_walk.len() as f64).collect();
    let decreasing = v[0] > v[1] && v[1] > v[2];
    let p = FractionalMomentParams {
        alpha: 1.0,
        replicates: 10_000,
        corner: CornerChoice::Max,
        walks: 0,
        walk_budget: 0,
        seed: derive(s, &[1]),
        hill_k: None,
    };
    let fm = fractional_moment(&law, &p)?;
    let infinite = fm.verdict == MomentVerdict::MomentAppearsInfinite;
    let tail = fm.tail.as_ref().map_or("none".to_string(), |t| format!("{:.3} [{:.3}, {:.3}]", t.index, t.ci.lo, t.ci.hi));
    Ok(Check {
        pass: decreasing && v[2] < 0.05 && infinite,
        detail: format!(
            "v·e₂ at 1e4/1e5/1e6 = {:.4}/{:.4}/{:.4}; max_x E_x[T] tail index {tail}, {:?}",
            v[0], v[1], v[2], fm.verdict
        ),
        values: json!({"velocity": v, "scales": scales, "fractional_moment": fm}),
    })
}

fn hypercube_identities(s: u64) -> Result<Check> {
    let laws = [SiteLaw::uniform(2), SiteLaw::dirichlet_flat(2), expl()];
    let cube = UnitHypercube::at(Site::origin(2));
    let mut counts = Vec::new();
    let mut examples = Vec::new();
    for (j, law) in laws.iter().enumerate() {
        let failures = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let env = Environment::new(law.clone(), env_seed(derive(s, &[j as u64]), r))?;
                Ok(analyze(&env, cube, 1)?.identity_failures(1e-10))
            })
            .collect::<Result<Vec<_>>>()?;
        let total: usize = failures.iter().map(Vec::len).sum();
        if let Some(f) = failures.iter().flatten().next() {
            examples.push(format!("{}: {f}", law.name()));
        }
        counts.push(json!({"law": law.name(), "environments": 1000, "failures": total}));
    }
    let total: u64 = counts.iter().map(|c| c["failures"].as_u64().unwrap()).sum();
    Ok(Check {
        pass: total == 0,
        detail: format!("{total} identity failures over 3 × 1000 environments"),
        values: json!({"per_law": counts, "examples": examples}),
    })
}

fn uniform_golden_values() -> Result<Check> {
    let env = Environment::new(SiteLaw::uniform(2), 0)?;
    let a = analyze(&env, UnitHypercube::at(Site::origin(2)), 1)?;
    let got = [a.mean_exit[0], a.qtilde_sum[0], a.qtilde[0][0], a.qtilde[0][3], a.fundamental[0][0]];
    let want = [2.0, 6.0 / 7.0, 0.5, 1.0 / 14.0, 7.0 / 6.0];
    let err = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    Ok(Check {
        pass: err <= 1e-12,
        detail: format!("max abs error {err:.1e} over meanExit, Q̃₀, Q̃₀,₀, Q̃₀,e₁+e₂, E₀[N(0)]"),
        values: json!({"got": got, "want": want, "max_abs_error": err}),
    })
}

fn geometric_visits(s: u64) -> Result<Check> {
    let env = Environment::new(SiteLaw::uniform(2), env_seed(s, 0))?;
    let cube = UnitHypercube::at(Site::origin(2));
    let p_values = (0..100u64)
        .into_par_iter()
        .map(|rep| Ok(visit_law_check(&env, cube, 0, 100_000, walk_seed(s, 0, rep))?.chi_square.p_value))
        .collect::<Result<Vec<f64>>>()?;
    let ok = p_values.iter().filter(|&&p| p > 0.01).count();
    Ok(Check {
        pass: ok >= 95,
        detail: format!("p > 0.01 in {ok} of 100 repetitions of 1e5 runs"),
        values: json!({"p_values": p_values, "passing": ok}),
    })
}

fn regeneration_structure(s: u64) -> Result<Check> {
    let unit = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let n = 100_000;
    let walks = annealed_walks(&expl(), &RegenParams::default_for(&unit, n)?, n, 100, s)?;
    let ks = independence_check(&walks)?;
    let v = renewal_velocity(&walks, &unit)?;
    Ok(Check {
        pass: ks.passes() && v.agree,
        detail: format!(
            "KS {:.4} vs 1% critical {:.4}; renewal {:.4} vs direct {:.4} along ℓ, agree={}",
            ks.statistic, ks.critical_1pct, v.renewal_along.mean, v.direct_along.mean, v.agree
        ),
        values: json!({"ks": ks, "velocity": v}),
    })
}

fn mark_sum_identity(s: u64) -> Result<Check> {
    let pol = EPrimePolicy::with_default_delta(2, vec![0.4; 4])?;
    let gammas = pol.gammas(2);
    let mut per_law = Vec::new();
    let mut bad = 0usize;
    for (j, law) in [SiteLaw::dirichlet_flat(2), expl()].iter().enumerate() {
        let rows = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let env = Environment::new(law.clone(), env_seed(derive(s, &[j as u64]), r))?;
                let mmh = discover(&env, &pol)?;
                let audit = mmh.audit().is_ok();
                let k = mmh.event.ok_or_else(|| Error::Invariant("no event fired".into()))?;
                Ok((k, mark_sum(&mmh, &gammas)?, audit))
            })
            .collect::<Result<Vec<(usize, f64, bool)>>>()?;
        let mut by_event = [0usize; 4];
        let mut law_bad = 0;
        for (k, sum, audit) in &rows {
            by_event[*k] += 1;
            if (sum - 2.4).abs() > 1e-12 || (sum - pol.expected_mark_sum(*k)).abs() > 1e-12 || !audit {
                law_bad += 1;
            }
        }
        bad += law_bad;
        per_law.push(json!({"law": law.name(), "environments": 1000, "per_event": by_event, "failures": law_bad}));
    }
    Ok(Check {
        pass: bad == 0,
        detail: format!("{bad} mark-sum or audit failures over 2 × 1000 environments"),
        values: json!({"phi": 0.4, "per_law": per_law}),
    })
}

fn criterion_discrimination(s: u64) -> Result<Check> {
    let law = expl();
    let run = MomentRun {
        replicates: 10_000,
        seed: s,
        hill_k: None,
    };
    let probe = moment_conditions(&law, &MomentSpec::EPrime1Probe { exponent: 1.0 / 8.0 }, &run, None)?;
    let floor = 0.2 / 2.0;
    let kt = moment_conditions(
        &law,
        &MomentSpec::KTilde1 {
            exponent: 2.0,
            q_floor: Some(floor),
        },
        &run,
        None,
    )?;
    let min_q = kt.estimate("min Q_x over samples").map_or(f64::NAN, |e| e.value);
    let bound_ok = min_q >= floor - 1e-12;
    Ok(Check {
        pass: probe.verdict == Verdict::ViolatedEmpirically && kt.verdict == Verdict::SatisfiedEmpirically && bound_ok,
        detail: format!(
            "E'1 probe at 1/8: {:?}; K~1 at 2: {:?}; min Q_x = {min_q:.4} (floor 0.1)",
            probe.verdict, kt.verdict
        ),
        values: json!({"probe": probe, "ktilde": kt}),
    })
}

fn trap_tail_exponent(s: u64) -> Result<Check> {
    let p = FractionalMomentParams {
        alpha: 1.0,
        replicates: 10_000,
        corner: CornerChoice::Corner(0),
        walks: 0,
        walk_budget: 0,
        seed: s,
        hill_k: None,
    };
    let fm = fractional_moment(&SiteLaw::trap_sym(2), &p)?;
    let t = fm.tail.clone().ok_or_else(|| Error::InsufficientData("no tail".into()))?;
    Ok(Check {
        pass: in_range(t.index, 0.8, 1.2),
        detail: format!("Hill index {:.3} [{:.3}, {:.3}] with k = {}; target [0.8, 1.2]", t.index, t.ci.lo, t.ci.hi, t.k),
        values: json!({"fractional_moment": fm}),
    })
}

fn path_bundle_bound(s: u64) -> Result<Check> {
    let pol = EPrimePolicy::with_default_delta(2, vec![0.4; 4])?;
    let mut per_law = Vec::new();
    let mut total = 0;
    for (j, law) in [SiteLaw::uniform(2), expl()].iter().enumerate() {
        let failures = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let env = Environment::new(law.clone(), env_seed(derive(s, &[j as u64]), r))?;
                let mmh = discover(&env, &pol)?;
                Ok(paths(&env, &mmh, 5)?.bound_failures(1e-12).len())
            })
            .collect::<Result<Vec<usize>>>()?;
        let n: usize = failures.iter().sum();
        total += n;
        per_law.push(json!({"law": law.name(), "environments": 1000, "corner_failures": n}));
    }
    Ok(Check {
        pass: total == 0,
        detail: format!("{total} corners below (1/d)·Q̃·ΠQ over 2 × 1000 environments, n = 5"),
        values: json!({"per_law": per_law}),
    })
}

fn slab_decay(s: u64) -> Result<Check> {
    let p = SlabParams {
        ell: vec![1.0, 1.0],
        b: 1.0,
        l: vec![8.0, 16.0, 32.0, 64.0],
        gamma: 1.0,
        walk_budget: 1_000_000,
        replicates: 20_000,
        seed: s,
        tilt: TiltChoice::Cramer { samples: 100_000 },
        neighborhood: None,
    };
    let rep = slab_exit(&expl(), &p)?;
    let main = &rep.directions[0];
    let detail = match &main.fit {
        Some(f) => format!("slope of ln P vs L = {:.4} [{:.4}, {:.4}]", f.slope, f.slope_ci.lo, f.slope_ci.hi),
        None => "no fit: some estimate is zero".into(),
    };
    Ok(Check {
        pass: main.decays(),
        detail,
        values: json!({"slab": rep}),
    })
}
