//! Experiment configuration.
//!
//! A config is a JSON tree. Command-line flags are applied as patches on
//! top of the file, then the tree is resolved (law aliases expanded, `ell`
//! fixed to a vector) and deserialized. The resolved tree is what gets
//! hashed and written next to the outputs, so feeding it back reproduces
//! the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use rwre_core::{Error, Result, SiteLaw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub law: SiteLaw,
    /// Reference direction; `"auto"` is resolved before deserialization.
    pub ell: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub walk: WalkBlock,
    #[serde(default)]
    pub regen: RegenBlock,
    #[serde(default)]
    pub hypercube: HypercubeBlock,
    #[serde(default)]
    pub criteria: CriteriaBlock,
    #[serde(default)]
    pub paths: PathsBlock,
}

fn default_out() -> PathBuf {
    PathBuf::from("rwre-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkBlock {
    pub steps: u64,
    pub walks: usize,
    /// Number of walks whose full paths are written.
    pub trace: usize,
}

impl Default for WalkBlock {
    fn default() -> Self {
        WalkBlock {
            steps: 1000,
            walks: 100,
            trace: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegenBlock {
    pub steps: u64,
    pub walks: usize,
    /// Defaults to `3√d`.
    pub a: Option<f64>,
    /// Defaults to `steps / 4`.
    pub margin: Option<u64>,
}

impl Default for RegenBlock {
    fn default() -> Self {
        RegenBlock {
            steps: 100_000,
            walks: 100,
            a: None,
            margin: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypercubeBlock {
    pub replicates: usize,
    pub moments: usize,
    /// Tail verdict on `E_x[(T^ex)^α]` across replicates.
    pub fractional: Option<f64>,
    /// `"max"` or a corner mask.
    pub corner: String,
    pub walks: usize,
    pub walk_budget: u64,
    pub hill_k: Option<usize>,
    /// Runs of the visit-count check at the origin corner.
    pub visit_runs: Option<u64>,
}

impl Default for HypercubeBlock {
    fn default() -> Self {
        HypercubeBlock {
            replicates: 1,
            moments: 1,
            fractional: None,
            corner: "max".into(),
            walks: 1000,
            walk_budget: 1_000_000,
            hill_k: None,
            visit_runs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriteriaBlock {
    /// One of `e0`, `eprime1`, `eprime1-probe`, `ktilde1`, `k`, `pm`, `slab`,
    /// `tilted-box`.
    pub criterion: String,
    pub replicates: usize,
    pub hill_k: Option<usize>,
    /// Per-direction exponents (`η_e` or `φ(e)`); one value is broadcast.
    pub exponents: Vec<f64>,
    pub exponent: f64,
    pub q_floor: Option<f64>,
    pub alpha: f64,
    pub eps: f64,
    /// `eprime` or `origin`.
    pub policy: String,
    pub phi: Vec<f64>,
    pub m: f64,
    pub l: Vec<f64>,
    pub b: f64,
    pub gamma: f64,
    pub walk_budget: u64,
    /// `none`, `cramer` or a fixed `θ`.
    pub tilt: String,
    pub neighborhood: Option<f64>,
    pub beta: f64,
    pub runs: u64,
}

impl Default for CriteriaBlock {
    fn default() -> Self {
        CriteriaBlock {
            criterion: "e0".into(),
            replicates: 10_000,
            hill_k: None,
            exponents: vec![1.0],
            exponent: 1.0,
            q_floor: None,
            alpha: 1.0,
            eps: 0.5,
            policy: "eprime".into(),
            phi: vec![0.4],
            m: 2.0,
            l: vec![8.0, 16.0, 32.0],
            b: 1.0,
            gamma: 1.0,
            walk_budget: 1_000_000,
            tilt: "cramer".into(),
            neighborhood: None,
            beta: 0.6,
            runs: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsBlock {
    pub n: usize,
    pub replicates: usize,
    pub policy: String,
    pub phi: Vec<f64>,
    /// When non-empty, run the attainability experiment on this grid.
    pub u: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PathsBlock {
    fn default() -> Self {
        PathsBlock {
            n: 5,
            replicates: 1,
            policy: "origin".into(),
            phi: vec![0.4],
            u: Vec::new(),
            eta: 0.3,
            delta: 0.1,
            alpha: 1.0,
            eps: 1.0,
        }
    }
}

/// Read a config file into a JSON tree.
pub fn read_tree(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::param(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::param(format!("{}: {e}", path.display())))
}

/// Set `tree[path...] = value`, creating objects on the way.
pub fn set(tree: &mut Value, path: &[&str], value: Value) {
    let mut node = tree;
    for key in path {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node.as_object_mut().unwrap().entry(key.to_string()).or_insert(Value::Null);
    }
    *node = value;
}

/// Expand law aliases, fill `ell` and deserialize.
pub fn resolve(mut tree: Value) -> Result<ExperimentConfig> {
    if !tree.is_object() {
        return Err(Error::param("config must be a JSON object"));
    }
    if tree.get("seed").is_none_or(Value::is_null) {
        return Err(Error::param("a master seed is required"));
    }
    let law = tree.get_mut("law").ok_or_else(|| Error::param("no law given"))?;
    expand_law(law)?;
    let law: SiteLaw = serde_json::from_value(law.clone()).map_err(|e| Error::param(format!("law: {e}")))?;
    law.validate()?;
    let ell = match tree.get("ell") {
        None | Some(Value::Null) => auto_ell(&law),
        Some(Value::String(s)) if s == "auto" => auto_ell(&law),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::param(format!("ell: {e}")))?,
    };
    if ell.len() != law.dim() || ell.iter().all(|x| *x == 0.0) || ell.iter().any(|x| !x.is_finite()) {
        return Err(Error::param(format!("ell must be a nonzero vector of length {}", law.dim())));
    }
    set(&mut tree, &["ell"], json!(ell));
    serde_json::from_value(tree).map_err(|e| Error::param(e.to_string()))
}

/// `uniform` becomes the symmetric `uniform_drift`, a missing `κ` defaults
/// to `1/(2d)`, and `dirichlet` with a `dim` and no weights becomes the flat
/// Dirichlet.
fn expand_law(law: &mut Value) -> Result<()> {
    let kind = law.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    let dim = law.get("dim").and_then(Value::as_u64);
    match kind.as_str() {
        "uniform" => {
            let d = dim.ok_or_else(|| Error::param("uniform law needs dim"))?;
            if d == 0 {
                return Err(Error::param("dim must be positive"));
            }
            if let Some(k) = law.as_object().unwrap().keys().find(|k| *k != "kind" && *k != "dim") {
                return Err(Error::param(format!("uniform law takes only dim, got {k}")));
            }
            *law = json!({"kind": "uniform_drift", "dim": d, "kappa": 1.0 / (2 * d) as f64, "axis": 0, "strength": 0.0});
        }
        "uniform_drift" if law.get("kappa").is_none() => {
            let d = dim.ok_or_else(|| Error::param("uniform_drift law needs dim"))?;
            law["kappa"] = json!(1.0 / (2 * d.max(1)) as f64);
        }
        "dirichlet" if law.get("weights").is_none() => {
            let d = dim.ok_or_else(|| Error::param("dirichlet law needs weights or dim"))?;
            *law = json!({"kind": "dirichlet", "weights": vec![1.0; 2 * d as usize]});
        }
        _ => {}
    }
    Ok(())
}

/// `Σ e_i` for the explicit law, the transient axis for the transient trap,
/// the drift axis for `uniform_drift`, `e_1` otherwise.
pub fn auto_ell(law: &SiteLaw) -> Vec<f64> {
    let d = law.dim();
    let mut ell = vec![0.0; d];
    match law {
        SiteLaw::Expl { .. } => ell.iter_mut().for_each(|x| *x = 1.0),
        SiteLaw::TrapTransient { .. } => ell[d - 1] = 1.0,
        SiteLaw::UniformDrift { axis, .. } if *axis < d => ell[*axis] = 1.0,
        SiteLaw::UniformDrift { axis, .. } => ell[axis - d] = -1.0,
        _ => ell[0] = 1.0,
    }
    ell
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the pretty-printed resolved config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `ell / |ell|`.
    pub fn unit_ell(&self) -> Vec<f64> {
        let n = self.ell.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.ell.iter().map(|x| x / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Value {
        json!({"law": {"kind": "expl", "dim": 2, "eps": 0.2}, "ell": "auto", "seed": 42})
    }

    #[test]
    fn auto_ell_per_law() {
        let c = resolve(base()).unwrap();
        assert_eq!(c.ell, vec![1.0, 1.0]);
        let mut t = base();
        set(&mut t, &["law"], json!({"kind": "trap_transient", "dim": 1}));
        assert_eq!(resolve(t).unwrap().ell, vec![0.0, 1.0]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut t = base();
        set(&mut t, &["regen", "walks"], json!(7));
        let c = resolve(t).unwrap();
        let back = resolve(serde_json::from_str(&c.to_json()).unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn uniform_alias_expands() {
        let t = json!({"law": {"kind": "uniform", "dim": 2}, "seed": 1});
        let c = resolve(t).unwrap();
        assert_eq!(c.law, SiteLaw::uniform(2));
    }

    #[test]
    fn seed_is_mandatory_and_fields_are_checked() {
        assert!(resolve(json!({"law": {"kind": "uniform", "dim": 2}})).is_err());
        let mut t = base();
        set(&mut t, &["walk", "stepz"], json!(3));
        assert!(resolve(t).is_err());
        let mut t = base();
        set(&mut t, &["ell"], json!([1.0]));
        assert!(resolve(t).is_err());
    }
}
