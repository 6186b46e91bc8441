//! I.i.d. random environments evaluated lazily, one site at a time.
//!
//! `Environment::transitions_at(x)` hashes `(seed, law tag, x)` into a
//! counter stream and draws the site's transition vector from it, so the
//! environment never has to be stored and any two workers agree on it.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::lattice::{Direction, Site, MAX_DIM};
use crate::rng::{derive, domain, CounterStream};

const MAX_DIRS: usize = 2 * MAX_DIM;

/// A probability vector over the `2d` unit directions, indexed canonically.
#[derive(Clone, Copy, PartialEq)]
pub struct TransitionVector {
    dim: u8,
    p: [f64; MAX_DIRS],
}

impl std::fmt::Debug for TransitionVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TransitionVector{:?}", self.probs())
    }
}

impl TransitionVector {
    /// Renormalizes when `|Σp - 1| <= 1e-9`, rejects larger deviations.
    pub fn new(p: &[f64]) -> Result<TransitionVector> {
        if p.is_empty() || p.len() % 2 != 0 || p.len() > MAX_DIRS {
            return Err(Error::param(format!(
                "transition vector needs 2d entries with d <= {MAX_DIM}, got {}",
                p.len()
            )));
        }
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::param(format!("transition vector has a bad entry: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("transition vector sums to {sum}")));
        }
        let mut arr = [0.0; MAX_DIRS];
        arr[..p.len()].copy_from_slice(p);
        if sum != 1.0 {
            for x in arr.iter_mut() {
                *x /= sum;
            }
        }
        Ok(TransitionVector {
            dim: (p.len() / 2) as u8,
            p: arr,
        })
    }

    pub fn uniform(dim: usize) -> TransitionVector {
        TransitionVector::new(&vec![1.0 / (2 * dim) as f64; 2 * dim]).expect("uniform vector")
    }

    /// All mass on one direction.
    pub fn deterministic(dir: Direction) -> TransitionVector {
        let mut p = vec![0.0; 2 * dir.dim()];
        p[dir.index()] = 1.0;
        TransitionVector::new(&p).expect("point mass")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn p(&self, dir: Direction) -> f64 {
        self.p[dir.index()]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.p[..2 * self.dim()]
    }

    pub fn min(&self) -> f64 {
        self.probs().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_elliptic(&self) -> bool {
        self.min() > 0.0
    }

    /// Mean displacement `Σ p(e) e`.
    pub fn drift(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.p[i] - self.p[i + d]).collect()
    }

    /// Inverse-CDF draw in canonical direction order.
    #[inline]
    pub fn sample(&self, u: f64) -> Direction {
        let n = 2 * self.dim();
        let mut acc = 0.0;
        for k in 0..n - 1 {
            acc += self.p[k];
            if u < acc {
                return Direction::new(k, self.dim());
            }
        }
        // the last direction with positive mass absorbs rounding
        let last = (0..n).rev().find(|&k| self.p[k] > 0.0).unwrap_or(n - 1);
        Direction::new(last, self.dim())
    }
}

/// One weighted atom of a [`SiteLaw::TableMixture`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureEntry {
    pub weight: f64,
    pub p: Vec<f64>,
}

/// The common law of the transition vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteLaw {
    /// `p(e) = κ + (1 - 2dκ) U_e b_e / Σ U b`, with `U_e` i.i.d. uniform and
    /// `b_e = 1 + strength` on `+e_axis`, `1` elsewhere. `κ = 1/(2d)` is the
    /// simple symmetric walk.
    UniformDrift {
        dim: usize,
        kappa: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default)]
        strength: f64,
    },
    /// One direction `i0` (uniform) gets `1/T` with `T` Pareto on
    /// `[2d+1, ∞)`; the rest of the forward mass `1-ε` and backward mass `ε`
    /// is spread evenly.
    Expl {
        dim: usize,
        eps: f64,
        /// Tail index of `T`; defaults to `1/(6d)`.
        #[serde(default)]
        tail_index: Option<f64>,
    },
    /// `p = T/d` on a random sign basis `B0`, `(1-T)/d` on `-B0`, with
    /// `T = U^{1/tail}/2`.
    TrapSym {
        dim: usize,
        /// Tail exponent of `1/T`; defaults to `2^{-d}`.
        #[serde(default)]
        tail_exponent: Option<f64>,
    },
    /// The trap law on the first `dim` axes of `Z^{dim+1}` plus a transient
    /// axis with weights `2T` forward and `T` backward.
    TrapTransient {
        dim: usize,
        #[serde(default)]
        tail_exponent: Option<f64>,
    },
    Dirichlet { weights: Vec<f64> },
    TableMixture { entries: Vec<MixtureEntry> },
}

impl SiteLaw {
    pub fn uniform(dim: usize) -> SiteLaw {
        SiteLaw::UniformDrift {
            dim,
            kappa: 1.0 / (2 * dim) as f64,
            axis: 0,
            strength: 0.0,
        }
    }

    pub fn expl(dim: usize, eps: f64) -> SiteLaw {
        SiteLaw::Expl {
            dim,
            eps,
            tail_index: None,
        }
    }

    pub fn trap_sym(dim: usize) -> SiteLaw {
        SiteLaw::TrapSym {
            dim,
            tail_exponent: None,
        }
    }

    pub fn trap_transient(dim: usize) -> SiteLaw {
        SiteLaw::TrapTransient {
            dim,
            tail_exponent: None,
        }
    }

    pub fn dirichlet_flat(dim: usize) -> SiteLaw {
        SiteLaw::Dirichlet {
            weights: vec![1.0; 2 * dim],
        }
    }

    /// Dimension of the lattice the walk lives on.
    pub fn dim(&self) -> usize {
        match self {
            SiteLaw::UniformDrift { dim, .. }
            | SiteLaw::Expl { dim, .. }
            | SiteLaw::TrapSym { dim, .. } => *dim,
            SiteLaw::TrapTransient { dim, .. } => dim + 1,
            SiteLaw::Dirichlet { weights } => weights.len() / 2,
            SiteLaw::TableMixture { entries } => entries.first().map_or(0, |e| e.p.len() / 2),
        }
    }

    fn tag(&self) -> u64 {
        match self {
            SiteLaw::UniformDrift { .. } => 1,
            SiteLaw::Expl { .. } => 2,
            SiteLaw::TrapSym { .. } => 3,
            SiteLaw::TrapTransient { .. } => 4,
            SiteLaw::Dirichlet { .. } => 5,
            SiteLaw::TableMixture { .. } => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SiteLaw::UniformDrift { .. } => "uniform_drift",
            SiteLaw::Expl { .. } => "expl",
            SiteLaw::TrapSym { .. } => "trap_sym",
            SiteLaw::TrapTransient { .. } => "trap_transient",
            SiteLaw::Dirichlet { .. } => "dirichlet",
            SiteLaw::TableMixture { .. } => "table_mixture",
        }
    }

    pub fn expl_tail_index(dim: usize, tail_index: Option<f64>) -> f64 {
        tail_index.unwrap_or(1.0 / (6 * dim) as f64)
    }

    pub fn trap_tail_exponent(dim: usize, tail_exponent: Option<f64>) -> f64 {
        tail_exponent.unwrap_or(1.0 / (1u64 << dim) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::param(format!(
                "{} law: lattice dimension {d} not in 1..={MAX_DIM}",
                self.name()
            )));
        }
        match self {
            SiteLaw::UniformDrift {
                dim,
                kappa,
                axis,
                strength,
            } => {
                let max = 1.0 / (2 * dim) as f64;
                if !(*kappa >= 0.0 && *kappa <= max) {
                    return Err(Error::param(format!("kappa must be in [0, 1/(2d)] = [0, {max}]")));
                }
                if *axis >= *dim {
                    return Err(Error::param("drift axis out of range"));
                }
                if !(strength.is_finite() && *strength >= 0.0) {
                    return Err(Error::param("drift strength must be >= 0"));
                }
            }
            SiteLaw::Expl {
                dim,
                eps,
                tail_index,
            } => {
                if *dim < 2 {
                    return Err(Error::param("expl law needs d >= 2"));
                }
                let n = (2 * dim + 1) as f64;
                // the lower end is admitted: T > 2d+1 strictly since U < 1
                if !(*eps >= 1.0 / n && *eps < 2.0 * *dim as f64 / n) {
                    return Err(Error::param(format!(
                        "eps must be in [1/(2d+1), 2d/(2d+1)), got {eps}"
                    )));
                }
                let t = SiteLaw::expl_tail_index(*dim, *tail_index);
                let lo = 1.0 / (8 * dim) as f64;
                let hi = 1.0 / (4 * dim) as f64;
                if !(t > lo && t <= hi) {
                    return Err(Error::param(format!(
                        "tail index of T must be in (1/(8d), 1/(4d)], got {t}"
                    )));
                }
            }
            SiteLaw::TrapSym { dim, tail_exponent }
            | SiteLaw::TrapTransient { dim, tail_exponent } => {
                let t = SiteLaw::trap_tail_exponent(*dim, *tail_exponent);
                let max = 1.0 / (1u64 << dim) as f64;
                if !(t > 0.0 && t <= max) {
                    return Err(Error::param(format!(
                        "tail exponent of 1/T must be in (0, 2^-d], got {t}"
                    )));
                }
            }
            SiteLaw::Dirichlet { weights } => {
                if weights.len() % 2 != 0 || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::param("dirichlet weights must be 2d positive numbers"));
                }
            }
            SiteLaw::TableMixture { entries } => {
                if entries.is_empty() {
                    return Err(Error::param("table mixture needs at least one entry"));
                }
                let total: f64 = entries.iter().map(|e| e.weight).sum();
                for e in entries {
                    if !(e.weight.is_finite() && e.weight >= 0.0) || e.p.len() != 2 * d {
                        return Err(Error::param("table mixture entry has a bad weight or size"));
                    }
                    TransitionVector::new(&e.p)?;
                }
                if !(total > 0.0) {
                    return Err(Error::param("table mixture weights sum to zero"));
                }
            }
        }
        Ok(())
    }

    /// A uniform lower bound on every entry, when the law has one.
    pub fn uniform_ellipticity(&self) -> Option<f64> {
        match self {
            SiteLaw::UniformDrift { kappa, .. } => Some(*kappa),
            SiteLaw::TableMixture { entries } => Some(
                entries
                    .iter()
                    .filter(|e| e.weight > 0.0)
                    .flat_map(|e| e.p.iter().copied())
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        }
    }

    /// Draw one transition vector. The number of uniforms consumed depends
    /// only on the law, never on the values drawn.
    ///
    /// Draw order: `expl` takes `T` then `i0`; the trap laws take `T` then one
    /// sign per trap axis; `uniform_drift` and `dirichlet` take one uniform per
    /// direction in index order; `table_mixture` takes one uniform.
    pub fn sample(&self, s: &mut CounterStream) -> TransitionVector {
        match self {
            SiteLaw::UniformDrift {
                dim,
                kappa,
                axis,
                strength,
            } => {
                let d = *dim;
                let mut w = [0.0; MAX_DIRS];
                let mut total = 0.0;
                for (k, wk) in w.iter_mut().enumerate().take(2 * d) {
                    let b = if k == *axis { 1.0 + strength } else { 1.0 };
                    *wk = s.next_f64() * b;
                    total += *wk;
                }
                let free = 1.0 - 2.0 * d as f64 * kappa;
                let p: Vec<f64> = w[..2 * d].iter().map(|x| kappa + free * x / total).collect();
                TransitionVector::new(&p).expect("uniform drift vector")
            }
            SiteLaw::Expl {
                dim,
                eps,
                tail_index,
            } => {
                let d = *dim;
                let t = sample_expl_t(s, d, SiteLaw::expl_tail_index(d, *tail_index));
                let i0 = ((s.next_f64() * (2 * d) as f64) as usize).min(2 * d - 1);
                expl_vector(d, *eps, t, i0)
            }
            SiteLaw::TrapSym { dim, tail_exponent } => {
                let d = *dim;
                let t = sample_trap_t(s, SiteLaw::trap_tail_exponent(d, *tail_exponent));
                let mut p = vec![0.0; 2 * d];
                for i in 0..d {
                    let plus = s.next_f64() < 0.5;
                    let (hard, easy) = if plus { (i, i + d) } else { (i + d, i) };
                    p[hard] = t / d as f64;
                    p[easy] = (1.0 - t) / d as f64;
                }
                TransitionVector::new(&p).expect("trap vector")
            }
            SiteLaw::TrapTransient { dim, tail_exponent } => {
                let d = *dim;
                let n = d + 1;
                let t = sample_trap_t(s, SiteLaw::trap_tail_exponent(d, *tail_exponent));
                let c = d as f64 + 3.0 * t;
                let mut p = vec![0.0; 2 * n];
                for i in 0..d {
                    let plus = s.next_f64() < 0.5;
                    let (hard, easy) = if plus { (i, i + n) } else { (i + n, i) };
                    p[hard] = t / c;
                    p[easy] = (1.0 - t) / c;
                }
                p[d] = 2.0 * t / c;
                p[d + n] = t / c;
                TransitionVector::new(&p).expect("transient trap vector")
            }
            SiteLaw::Dirichlet { weights } => {
                let g: Vec<f64> = weights.iter().map(|&a| gamma_inverse_cdf(a, s.next_f64())).collect();
                let total: f64 = g.iter().sum();
                let p: Vec<f64> = g.iter().map(|x| x / total).collect();
                TransitionVector::new(&p).expect("dirichlet vector")
            }
            SiteLaw::TableMixture { entries } => {
                let total: f64 = entries.iter().map(|e| e.weight).sum();
                let mut u = s.next_f64() * total;
                let mut pick = entries.len() - 1;
                for (i, e) in entries.iter().enumerate() {
                    if u < e.weight {
                        pick = i;
                        break;
                    }
                    u -= e.weight;
                }
                TransitionVector::new(&entries[pick].p).expect("validated entry")
            }
        }
    }
}

/// The explicit-law vector for given `T` and zero-based `i0`.
pub fn expl_vector(d: usize, eps: f64, t: f64, i0: usize) -> TransitionVector {
    let forward = i0 < d;
    let mut p = vec![0.0; 2 * d];
    for (i, pi) in p.iter_mut().enumerate() {
        *pi = if i == i0 {
            1.0 / t
        } else if i < d {
            let hit = if forward { 1.0 } else { 0.0 };
            (1.0 - eps - hit / t) / (d as f64 - hit)
        } else {
            let hit = if forward { 0.0 } else { 1.0 };
            (eps - hit / t) / (d as f64 - hit)
        };
    }
    TransitionVector::new(&p).expect("expl vector")
}

/// `T = (2d+1) U^{-1/β}`: Pareto with tail index `β` on `[2d+1, ∞)`.
/// Capped at `1e300` so that `1/T` stays a normal float.
pub fn sample_expl_t(s: &mut CounterStream, d: usize, tail_index: f64) -> f64 {
    expl_t_from_uniform(s.next_f64(), d, tail_index)
}

pub fn expl_t_from_uniform(u: f64, d: usize, tail_index: f64) -> f64 {
    ((2 * d + 1) as f64 * u.powf(-1.0 / tail_index)).min(1e300)
}

/// `T = U^{1/θ} / 2`, so that `P[1/T >= n] = (2/n)^θ` for `n >= 2`.
/// Floored at the smallest normal float.
pub fn sample_trap_t(s: &mut CounterStream, tail_exponent: f64) -> f64 {
    trap_t_from_uniform(s.next_f64(), tail_exponent)
}

pub fn trap_t_from_uniform(u: f64, tail_exponent: f64) -> f64 {
    (0.5 * u.powf(1.0 / tail_exponent)).max(f64::MIN_POSITIVE)
}

fn gamma_inverse_cdf(shape: f64, u: f64) -> f64 {
    if shape == 1.0 {
        return -(-u).ln_1p();
    }
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    g.inverse_cdf(u).max(f64::MIN_POSITIVE)
}

/// An i.i.d. environment: a law plus a master seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    law: SiteLaw,
    seed: u64,
    key: u64,
}

impl Environment {
    pub fn new(law: SiteLaw, seed: u64) -> Result<Environment> {
        law.validate()?;
        let key = derive(seed, &[domain::ENV, law.tag()]);
        Ok(Environment { law, seed, key })
    }

    pub fn law(&self) -> &SiteLaw {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    /// Stream key for site `x`.
    #[inline]
    pub fn site_key(&self, x: &Site) -> u64 {
        let mut k = self.key;
        for &c in x.coords() {
            k = crate::rng::absorb(k, c as u64);
        }
        k
    }

    #[inline]
    pub fn transitions_at(&self, x: &Site) -> TransitionVector {
        debug_assert_eq!(x.dim(), self.dim());
        let mut s = CounterStream::new(self.site_key(x));
        self.law.sample(&mut s)
    }
}

/// Anything that assigns a transition vector to every site.
pub trait Medium: Sync {
    fn dim(&self) -> usize;
    fn transitions_at(&self, x: &Site) -> TransitionVector;
}

impl Medium for Environment {
    fn dim(&self) -> usize {
        Environment::dim(self)
    }
    #[inline]
    fn transitions_at(&self, x: &Site) -> TransitionVector {
        Environment::transitions_at(self, x)
    }
}

/// The same vector at every site.
#[derive(Clone, Debug)]
pub struct Homogeneous(pub TransitionVector);

impl Medium for Homogeneous {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn transitions_at(&self, _: &Site) -> TransitionVector {
        self.0
    }
}

/// Explicit vectors on a finite set of sites, a default elsewhere.
#[derive(Clone, Debug)]
pub struct Patched<M> {
    pub base: M,
    pub sites: std::collections::HashMap<Site, TransitionVector>,
}

impl<M: Medium> Medium for Patched<M> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn transitions_at(&self, x: &Site) -> TransitionVector {
        self.sites.get(x).copied().unwrap_or_else(|| self.base.transitions_at(x))
    }
}

/// Monte Carlo ellipticity summary of a law.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityProfile {
    pub samples: usize,
    pub min_entry: f64,
    pub max_entry: f64,
    /// `(κ, P̂[min_e p(e) >= κ])` on a geometric grid below `1/(2d)`.
    pub curve: Vec<(f64, f64)>,
    /// Largest `κ0` with `P̂[min_e p(e) >= κ0] > 1/2`.
    pub kappa0: f64,
    /// Analytic uniform lower bound, if the law has one.
    pub uniform_bound: Option<f64>,
    pub elliptic_fraction: f64,
}

pub fn ellipticity_profile(env: &Environment, samples: usize) -> Result<EllipticityProfile> {
    if samples == 0 {
        return Err(Error::param("ellipticity profile needs at least one sample"));
    }
    let d = env.dim();
    let mut mins: Vec<f64> = Vec::with_capacity(samples);
    let mut max_entry: f64 = 0.0;
    for k in 0..samples {
        let mut c = vec![0i64; d];
        c[0] = k as i64;
        let tv = env.transitions_at(&Site::new(&c));
        mins.push(tv.min());
        max_entry = tv.probs().iter().copied().fold(max_entry, f64::max);
    }
    mins.sort_by(f64::total_cmp);
    let n = samples as f64;
    let frac_at_least = |kappa: f64| {
        let below = mins.partition_point(|&m| m < kappa);
        (samples - below) as f64 / n
    };
    let top = 1.0 / (2 * d) as f64;
    let curve = (0..=40)
        .map(|j| {
            let kappa = top * 0.5f64.powi(j);
            (kappa, frac_at_least(kappa))
        })
        .collect();
    // more than half of the minima are >= mins[samples - 1 - samples/2]
    let kappa0 = mins[samples - 1 - samples / 2];
    Ok(EllipticityProfile {
        samples,
        min_entry: mins[0],
        max_entry,
        curve,
        kappa0,
        uniform_bound: env.law().uniform_ellipticity(),
        elliptic_fraction: frac_at_least(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_vectors() {
        assert!(TransitionVector::new(&[0.5, 0.6]).is_err());
        assert!(TransitionVector::new(&[0.5, 0.5, 0.0]).is_err());
        assert!(TransitionVector::new(&[1.5, -0.5]).is_err());
        let tv = TransitionVector::new(&[0.5 + 4e-10, 0.5]).unwrap();
        assert!((tv.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_sampling() {
        let tv = TransitionVector::new(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(tv.sample(0.05).index(), 0);
        assert_eq!(tv.sample(0.25).index(), 1);
        assert_eq!(tv.sample(0.59).index(), 2);
        assert_eq!(tv.sample(0.999_999).index(), 3);
        let det = TransitionVector::deterministic(Direction::new(0, 2));
        assert_eq!(det.sample(0.999_999_999).index(), 0);
    }

    #[test]
    fn uniform_law_is_uniform() {
        let env = Environment::new(SiteLaw::uniform(3), 5).unwrap();
        for k in 0..50 {
            let tv = env.transitions_at(&Site::new(&[k, -k, 2 * k]));
            for &p in tv.probs() {
                assert!((p - 1.0 / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn expl_forward_mass() {
        let env = Environment::new(SiteLaw::expl(2, 0.2), 11).unwrap();
        for k in 0..1000 {
            let tv = env.transitions_at(&Site::new(&[k, 3]));
            let p = tv.probs();
            assert!((p[0] + p[1] - 0.8).abs() < 1e-15);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn expl_t_closed_form() {
        assert!((expl_t_from_uniform(1.0, 2, 1.0 / 12.0) - 5.0).abs() < 1e-12);
        assert!((expl_t_from_uniform(0.5, 2, 1.0 / 12.0) - 20480.0).abs() < 1e-8);
    }

    #[test]
    fn trap_t_closed_form() {
        assert_eq!(trap_t_from_uniform(1.0, 0.25), 0.5);
        assert!((trap_t_from_uniform(0.5, 0.25) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn trap_transient_normalization() {
        let env = Environment::new(SiteLaw::trap_transient(2), 3).unwrap();
        for k in 0..500 {
            let tv = env.transitions_at(&Site::new(&[k, 0, -k]));
            let p = tv.probs();
            assert_eq!(tv.dim(), 3);
            // forward transient weight is exactly twice the backward one
            assert_eq!(p[2], 2.0 * p[5]);
            let t_over_c = p[5];
            let c = 2.0 / (1.0 - 3.0 * t_over_c);
            assert!((2.0..=6.0).contains(&c));
        }
    }

    #[test]
    fn determinism_and_site_independence() {
        let env = Environment::new(SiteLaw::dirichlet_flat(2), 99).unwrap();
        let x = Site::new(&[4, -7]);
        let a = env.transitions_at(&x);
        let b = env.transitions_at(&x);
        assert_eq!(a.probs(), b.probs());
        assert_ne!(env.site_key(&x), env.site_key(&Site::new(&[-7, 4])));
        let other = Environment::new(SiteLaw::dirichlet_flat(2), 100).unwrap();
        assert_ne!(other.transitions_at(&x).probs(), a.probs());
    }

    #[test]
    fn law_validation() {
        assert!(SiteLaw::expl(2, 0.1).validate().is_err());
        assert!(SiteLaw::expl(2, 0.8).validate().is_err());
        assert!(SiteLaw::expl(1, 0.4).validate().is_err());
        assert!(SiteLaw::expl(2, 0.2).validate().is_ok());
        assert!(SiteLaw::Dirichlet { weights: vec![1.0, 0.0] }.validate().is_err());
        assert!(SiteLaw::trap_transient(6).validate().is_err());
        assert!(SiteLaw::TrapSym { dim: 2, tail_exponent: Some(0.5) }.validate().is_err());
    }

    #[test]
    fn law_serde_roundtrip() {
        let law = SiteLaw::TableMixture {
            entries: vec![MixtureEntry {
                weight: 1.0,
                p: vec![0.5, 0.5],
            }],
        };
        let s = serde_json::to_string(&law).unwrap();
        assert!(s.contains("\"kind\":\"table_mixture\""));
        assert_eq!(serde_json::from_str::<SiteLaw>(&s).unwrap(), law);
        let e: SiteLaw = serde_json::from_str(r#"{"kind":"expl","dim":2,"eps":0.2}"#).unwrap();
        assert_eq!(e, SiteLaw::expl(2, 0.2));
    }

    #[test]
    fn profile_flags_uniform_laws() {
        let env = Environment::new(SiteLaw::uniform(2), 1).unwrap();
        let prof = ellipticity_profile(&env, 100).unwrap();
        assert!((prof.kappa0 - 0.25).abs() < 1e-15);
        assert_eq!(prof.uniform_bound, Some(0.25));
        let env = Environment::new(SiteLaw::expl(2, 0.2), 1).unwrap();
        let prof = ellipticity_profile(&env, 2000).unwrap();
        assert_eq!(prof.uniform_bound, None);
        assert!(prof.min_entry < 1e-3);
        assert!(ellipticity_profile(&env, 0).is_err());
    }
}
