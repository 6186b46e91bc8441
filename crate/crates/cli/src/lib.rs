//! `rwre`: the experiment runner.
//!
//! Each subcommand reads an optional JSON config, applies its flags on top,
//! writes CSV/JSON files under `out` and prints one summary line.
//!
//! Exit status: 0 on completion, 2 on a parameter or usage error, 3 when
//! there is too little data for an estimate, 1 for anything else,
//! including a failed acceptance criterion.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rwre_core::{Error, Result};

use config::{read_tree, resolve, set, ExperimentConfig};
use output::Sink;

#[derive(Debug, Parser)]
#[command(name = "rwre", version, about = "Random walks in random environments: simulation and criteria")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

/// Flags shared by the experiment subcommands.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// uniform, uniform_drift, expl, trap_sym, trap_transient, dirichlet.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Drift direction index of `uniform_drift`.
    #[arg(long)]
    pub axis: Option<usize>,
    #[arg(long)]
    pub strength: Option<f64>,
    /// Tail index of the explicit law or tail exponent of the trap laws.
    #[arg(long)]
    pub tail: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// `auto` or comma-separated coordinates.
    #[arg(long)]
    pub ell: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Annealed walks: endpoints and the velocity along ell.
    Walk {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        walks: Option<usize>,
        #[arg(long)]
        trace: Option<usize>,
    },
    /// Regeneration times and renewal velocity.
    Regen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        walks: Option<usize>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        margin: Option<u64>,
    },
    /// Exact exit analysis of the unit hypercube at the origin.
    Hypercube {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        moments: Option<usize>,
        #[arg(long)]
        fractional: Option<f64>,
        #[arg(long)]
        corner: Option<String>,
        #[arg(long)]
        walks: Option<usize>,
        #[arg(long)]
        walk_budget: Option<u64>,
        #[arg(long)]
        hill_k: Option<usize>,
        #[arg(long)]
        visit_runs: Option<u64>,
    },
    /// Moment, box, slab and tilted-box criteria.
    Criteria {
        #[command(flatten)]
        common: Common,
        /// e0, eprime1, eprime1-probe, ktilde1, k, pm, slab, tilted-box.
        #[arg(long)]
        criterion: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        hill_k: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        exponents: Option<Vec<f64>>,
        #[arg(long)]
        exponent: Option<f64>,
        #[arg(long)]
        q_floor: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// The `ε` of `(K)_α`; the law's `ε` is `--eps`.
        #[arg(long)]
        k_eps: Option<f64>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        l: Option<Vec<f64>>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        walk_budget: Option<u64>,
        #[arg(long)]
        tilt: Option<String>,
        #[arg(long)]
        neighborhood: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        runs: Option<u64>,
    },
    /// Escape-path bundles of marked hypercubes and their attainability.
    Paths {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        u: Option<Vec<f64>>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k_eps: Option<f64>,
    },
    /// The twelve-criterion acceptance suite.
    Acceptance {
        #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "rwre-acceptance")]
        out: PathBuf,
        /// Comma-separated criterion numbers; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

/// Collects `(path, value)` patches for present flags.
struct Patch(Vec<(Vec<&'static str>, Value)>);

impl Patch {
    fn put<T: serde::Serialize>(&mut self, path: &[&'static str], v: &Option<T>) {
        if let Some(v) = v {
            self.0.push((path.to_vec(), json!(v)));
        }
    }
}

/// Config tree from the file (if any) with the common flags applied.
fn base_tree(c: &Common) -> Result<Value> {
    let mut tree = match &c.config {
        Some(p) => read_tree(p)?,
        None => json!({}),
    };
    if let Some(kind) = &c.law {
        set(&mut tree, &["law"], json!({ "kind": kind }));
    }
    let kind = tree.pointer("/law/kind").and_then(Value::as_str).unwrap_or_default().to_string();
    if let Some(d) = c.d {
        if kind == "dirichlet" && c.weights.is_none() {
            set(&mut tree, &["law"], json!({"kind": "dirichlet", "dim": d}));
        } else {
            set(&mut tree, &["law", "dim"], json!(d));
        }
    }
    let tail_key = if kind == "expl" { "tail_index" } else { "tail_exponent" };
    let mut p = Patch(Vec::new());
    p.put(&["law", "eps"], &c.eps);
    p.put(&["law", "kappa"], &c.kappa);
    p.put(&["law", "axis"], &c.axis);
    p.put(&["law", "strength"], &c.strength);
    p.put(&["law", tail_key], &c.tail);
    p.put(&["law", "weights"], &c.weights);
    p.put(&["seed"], &c.seed);
    p.put(&["out"], &c.out);
    for (path, v) in p.0 {
        set(&mut tree, &path, v);
    }
    if let Some(e) = &c.ell {
        let v = if e == "auto" {
            json!("auto")
        } else {
            let xs: std::result::Result<Vec<f64>, _> = e.split(',').map(|s| s.trim().parse::<f64>()).collect();
            json!(xs.map_err(|_| Error::param(format!("ell must be auto or numbers, got {e}")))?)
        };
        set(&mut tree, &["ell"], v);
    }
    Ok(tree)
}

/// Resolved config for an experiment subcommand, or `None` for `acceptance`.
pub fn build_config(cmd: &Cmd) -> Result<Option<(&'static str, ExperimentConfig)>> {
    let mut p = Patch(Vec::new());
    let (name, common) = match cmd {
        Cmd::Walk { common, steps, walks, trace } => {
            p.put(&["walk", "steps"], steps);
            p.put(&["walk", "walks"], walks);
            p.put(&["walk", "trace"], trace);
            ("walk", common)
        }
        Cmd::Regen { common, steps, walks, a, margin } => {
            p.put(&["regen", "steps"], steps);
            p.put(&["regen", "walks"], walks);
            p.put(&["regen", "a"], a);
            p.put(&["regen", "margin"], margin);
            ("regen", common)
        }
        Cmd::Hypercube {
            common,
            replicates,
            moments,
            fractional,
            corner,
            walks,
            walk_budget,
            hill_k,
            visit_runs,
        } => {
            p.put(&["hypercube", "replicates"], replicates);
            p.put(&["hypercube", "moments"], moments);
            p.put(&["hypercube", "fractional"], fractional);
            p.put(&["hypercube", "corner"], corner);
            p.put(&["hypercube", "walks"], walks);
            p.put(&["hypercube", "walk_budget"], walk_budget);
            p.put(&["hypercube", "hill_k"], hill_k);
            p.put(&["hypercube", "visit_runs"], visit_runs);
            ("hypercube", common)
        }
        Cmd::Criteria {
            common,
            criterion,
            replicates,
            hill_k,
            exponents,
            exponent,
            q_floor,
            alpha,
            k_eps,
            policy,
            phi,
            m,
            l,
            b,
            gamma,
            walk_budget,
            tilt,
            neighborhood,
            beta,
            runs,
        } => {
            p.put(&["criteria", "criterion"], criterion);
            p.put(&["criteria", "replicates"], replicates);
            p.put(&["criteria", "hill_k"], hill_k);
            p.put(&["criteria", "exponents"], exponents);
            p.put(&["criteria", "exponent"], exponent);
            p.put(&["criteria", "q_floor"], q_floor);
            p.put(&["criteria", "alpha"], alpha);
            p.put(&["criteria", "eps"], k_eps);
            p.put(&["criteria", "policy"], policy);
            p.put(&["criteria", "phi"], phi);
            p.put(&["criteria", "m"], m);
            p.put(&["criteria", "l"], l);
            p.put(&["criteria", "b"], b);
            p.put(&["criteria", "gamma"], gamma);
            p.put(&["criteria", "walk_budget"], walk_budget);
            p.put(&["criteria", "tilt"], tilt);
            p.put(&["criteria", "neighborhood"], neighborhood);
            p.put(&["criteria", "beta"], beta);
            p.put(&["criteria", "runs"], runs);
            ("criteria", common)
        }
        Cmd::Paths {
            common,
            n,
            replicates,
            policy,
            phi,
            u,
            eta,
            delta,
            alpha,
            k_eps,
        } => {
            p.put(&["paths", "n"], n);
            p.put(&["paths", "replicates"], replicates);
            p.put(&["paths", "policy"], policy);
            p.put(&["paths", "phi"], phi);
            p.put(&["paths", "u"], u);
            p.put(&["paths", "eta"], eta);
            p.put(&["paths", "delta"], delta);
            p.put(&["paths", "alpha"], alpha);
            p.put(&["paths", "eps"], k_eps);
            ("paths", common)
        }
        Cmd::Acceptance { .. } => return Ok(None),
    };
    let mut tree = base_tree(common)?;
    for (path, v) in p.0 {
        set(&mut tree, &path, v);
    }
    Ok(Some((name, resolve(tree)?)))
}

/// Runs one experiment and returns its summary line.
pub fn run_experiment(name: &str, cfg: &ExperimentConfig) -> Result<String> {
    let sink = Sink::new(&cfg.out, &cfg.hash())?;
    sink.raw("config.json", &(cfg.to_json() + "\n"))?;
    match name {
        "walk" => commands::walk(cfg, &sink),
        "regen" => commands::regen(cfg, &sink),
        "hypercube" => commands::hypercube(cfg, &sink),
        "criteria" => commands::criteria(cfg, &sink),
        "paths" => commands::paths_cmd(cfg, &sink),
        other => Err(Error::param(format!("unknown subcommand {other}"))),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::DegenerateDirection(_) => 2,
        Error::InsufficientData(_) | Error::NoTail { .. } => 3,
        _ => 1,
    }
}

/// Caps the rayon pool at `RWRE_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RWRE_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::param(format!("RWRE_THREADS must be a positive integer, got {v}")))?;
        if n == 0 {
            return Err(Error::param("RWRE_THREADS must be positive"));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args`, runs the subcommand and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = init_threads().and_then(|_| match &cli.cmd {
        Cmd::Acceptance { seed, out, only } => {
            let outcomes = acceptance::run_suite(only, *seed, out, &mut |o| println!("{}", o.line()))?;
            let passed = outcomes.iter().filter(|o| o.pass).count();
            let line = format!("acceptance: {passed}/{} criteria passed; artifacts in {}", outcomes.len(), out.display());
            Ok((line, if passed == outcomes.len() { 0 } else { 1 }))
        }
        cmd => {
            let (name, cfg) = build_config(cmd)?.expect("experiment subcommand");
            run_experiment(name, &cfg).map(|line| (line, 0))
        }
    });
    match result {
        Ok((line, code)) => {
            println!("{line}");
            code
        }
        Err(e) => {
            eprintln!("rwre: {e}");
            exit_code(&e)
        }
    }
}
