//! Estimators shared by the experiments.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.hi + self.lo)
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, n: u64, z: f64) -> Interval {
    if n == 0 {
        return Interval::new(0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { (center + half).min(1.0) };
    Interval::new(lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailIndexEstimate {
    pub index: f64,
    pub ci: Interval,
    pub k: usize,
    pub n: usize,
}

/// Hill estimator of the tail index from the `k` largest order statistics:
/// `1 / ((1/k) Σ_{i<=k} ln X_(i) - ln X_(k+1))`. `k` defaults to `⌊√n⌋`.
pub fn hill(samples: &[f64], k: Option<usize>) -> Result<TailIndexEstimate> {
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::param("hill: samples must be positive and finite"));
    }
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    hill_logs(&logs, k)
}

/// [`hill`] on `ln X`, for samples too large to exponentiate.
pub fn hill_logs(logs: &[f64], k: Option<usize>) -> Result<TailIndexEstimate> {
    let n = logs.len();
    if logs.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("hill: log-samples must be finite"));
    }
    let k = k.unwrap_or((n as f64).sqrt() as usize);
    if k < 10 || k > n / 2 {
        return Err(Error::InsufficientData(format!(
            "hill: k = {k} must lie in [10, n/2] with n = {n}"
        )));
    }
    let mut sorted = logs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let gamma = sorted[..k].iter().map(|x| x - threshold).sum::<f64>() / k as f64;
    if gamma <= 0.0 {
        return Err(Error::NoTail { k });
    }
    let index = 1.0 / gamma;
    let w = Z95 / (k as f64).sqrt();
    Ok(TailIndexEstimate {
        index,
        ci: Interval::new(index * (1.0 - w), index * (1.0 + w)),
        k,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVerdict {
    MomentAppearsFinite,
    MomentAppearsInfinite,
    Inconclusive,
}

/// Moment of order `alpha` from a tail-index estimate: infinite when the
/// upper CI bound is `<= alpha`, finite when the lower bound is
/// `>= alpha + 0.25`.
pub fn moment_verdict(est: &TailIndexEstimate, alpha: f64) -> MomentVerdict {
    if est.ci.hi <= alpha {
        MomentVerdict::MomentAppearsInfinite
    } else if est.ci.lo >= alpha + 0.25 {
        MomentVerdict::MomentAppearsFinite
    } else {
        MomentVerdict::Inconclusive
    }
}

/// Verdict on `E[X^alpha]` for a positive sample. A sample whose top order
/// statistics coincide has a bounded tail, hence all moments.
pub fn sample_moment_verdict(samples: &[f64], alpha: f64, k: Option<usize>) -> Result<(MomentVerdict, Option<TailIndexEstimate>)> {
    if samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::param("moment verdict: samples must be positive and finite"));
    }
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    log_moment_verdict(&logs, alpha, k)
}

/// [`sample_moment_verdict`] on `ln X`.
pub fn log_moment_verdict(logs: &[f64], alpha: f64, k: Option<usize>) -> Result<(MomentVerdict, Option<TailIndexEstimate>)> {
    match hill_logs(logs, k) {
        Ok(est) => Ok((moment_verdict(&est, alpha), Some(est))),
        Err(Error::NoTail { .. }) => Ok((MomentVerdict::MomentAppearsFinite, None)),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci: Interval,
    pub n: usize,
}

/// Batch-means CI for the mean of a sequence.
pub fn batch_means(xs: &[f64], batches: usize) -> Result<MeanCi> {
    if batches < 2 || xs.len() < batches {
        return Err(Error::InsufficientData(format!(
            "batch means: {} values for {batches} batches",
            xs.len()
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    let m = mean(&xs[..batches * size]);
    let half = t_quantile_975(batches - 1) * (variance(&means) / batches as f64).sqrt();
    Ok(MeanCi {
        mean: m,
        ci: Interval::new(m - half, m + half),
        n: xs.len(),
    })
}

/// Ratio of sums `Σa / Σb` with a CI from batch ratios.
pub fn ratio_batch_ci(num: &[f64], den: &[f64], batches: usize) -> Result<MeanCi> {
    if num.len() != den.len() {
        return Err(Error::param("ratio: length mismatch"));
    }
    if batches < 2 || num.len() < batches {
        return Err(Error::InsufficientData(format!(
            "ratio: {} values for {batches} batches",
            num.len()
        )));
    }
    let size = num.len() / batches;
    let used = batches * size;
    let ratio = num[..used].iter().sum::<f64>() / den[..used].iter().sum::<f64>();
    let ratios: Vec<f64> = (0..batches)
        .map(|b| {
            let r = b * size..(b + 1) * size;
            num[r.clone()].iter().sum::<f64>() / den[r].iter().sum::<f64>()
        })
        .collect();
    let half = t_quantile_975(batches - 1) * (variance(&ratios) / batches as f64).sqrt();
    Ok(MeanCi {
        mean: ratio,
        ci: Interval::new(ratio - half, ratio + half),
        n: num.len(),
    })
}

fn t_quantile_975(dof: usize) -> f64 {
    use statrs::distribution::StudentsT;
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(Z95)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_1pct: f64,
    pub n: usize,
    pub m: usize,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic 1% critical
/// value `1.628 √((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("ks: empty sample".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(KsResult {
        statistic: d,
        critical_1pct: 1.628 * ((nf + mf) / (nf * mf)).sqrt(),
        n,
        m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson goodness of fit. Adjacent bins are pooled from the right until
/// every pooled expected count is at least 5.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::param("chi-square: bin count mismatch"));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probs.iter().sum();
    if n == 0 || (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::param("chi-square: need counts and probabilities summing to 1"));
    }
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, p) in observed.iter().zip(probs).rev() {
        o += *ob as f64;
        e += p * n as f64;
        if e >= 5.0 {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    if pooled.len() < 2 {
        return Err(Error::InsufficientData("chi-square: fewer than two pooled bins".into()));
    }
    let statistic: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = pooled.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(statistic);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins: pooled.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_ci: Interval,
}

/// Weighted least squares `y = a + b x` with known variances of `y`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], var: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() != var.len() || x.len() < 2 {
        return Err(Error::InsufficientData("fit: need at least two points".into()));
    }
    if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::param("fit: variances must be positive"));
    }
    let w: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let xbar = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ybar = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * (xi - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::param("fit: x values are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((xi, yi), wi)| wi * (xi - xbar) * (yi - ybar)).sum();
    let slope = sxy / sxx;
    let slope_se = (1.0 / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept: ybar - slope * xbar,
        slope_se,
        slope_ci: Interval::new(slope - Z95 * slope_se, slope + Z95 * slope_se),
    })
}

/// Covariance of rescaled displacements at two time scales.
#[derive(Clone, Debug, Serialize)]
pub struct CltDiagnostic {
    pub n: u64,
    pub walks: usize,
    /// Row-major `d × d`, at times `n` and `4n`.
    pub covariance_n: Vec<f64>,
    pub covariance_4n: Vec<f64>,
    /// Entrywise `cov_4n / cov_n`.
    pub scale_ratio: Vec<f64>,
    /// Entrywise `|cov_4n - cov_n| <= 3 se`.
    pub scale_stable: Vec<bool>,
    /// Standardized marginal kurtosis at `4n`.
    pub kurtosis: Vec<f64>,
    /// `|kurtosis - 3| <= 4 √(24/walks)`.
    pub normal_flags: Vec<bool>,
    pub min_eigenvalue: f64,
}

fn covariance(xs: &[Vec<f64>]) -> Vec<f64> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let m: Vec<f64> = (0..d).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n).collect();
    let mut c = vec![0.0; d * d];
    for x in xs {
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += (x[i] - m[i]) * (x[j] - m[j]);
            }
        }
    }
    for v in c.iter_mut() {
        *v /= n - 1.0;
    }
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (c[i * d + j] + c[j * d + i]);
            c[i * d + j] = s;
            c[j * d + i] = s;
        }
    }
    c
}

/// `positions_n[w]` and `positions_4n[w]` are `X_n` and `X_{4n}` of walk `w`.
pub fn clt_diagnostic(positions_n: &[Vec<f64>], positions_4n: &[Vec<f64>], n: u64, v: &[f64]) -> Result<CltDiagnostic> {
    let walks = positions_n.len();
    if walks < 200 || positions_4n.len() != walks {
        return Err(Error::InsufficientData(format!(
            "clt: need at least 200 walks per scale, got {walks}"
        )));
    }
    let d = v.len();
    let rescale = |xs: &[Vec<f64>], t: f64| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| (0..d).map(|i| (x[i] - t * v[i]) / t.sqrt()).collect())
            .collect()
    };
    let a = rescale(positions_n, n as f64);
    let b = rescale(positions_4n, 4.0 * n as f64);
    let ca = covariance(&a);
    let cb = covariance(&b);
    let wn = walks as f64;
    let mut ratio = vec![0.0; d * d];
    let mut stable = vec![false; d * d];
    for i in 0..d {
        for j in 0..d {
            let k = i * d + j;
            ratio[k] = cb[k] / ca[k];
            let se = |c: &[f64]| ((c[i * d + i] * c[j * d + j] + c[k] * c[k]) / (wn - 1.0)).sqrt();
            let tol = 3.0 * (se(&ca).powi(2) + se(&cb).powi(2)).sqrt();
            stable[k] = (cb[k] - ca[k]).abs() <= tol;
        }
    }
    let kurtosis: Vec<f64> = (0..d)
        .map(|i| {
            let col: Vec<f64> = b.iter().map(|x| x[i]).collect();
            let m = mean(&col);
            let m2 = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / wn;
            let m4 = col.iter().map(|x| (x - m).powi(4)).sum::<f64>() / wn;
            if m2 > 0.0 {
                m4 / (m2 * m2)
            } else {
                f64::NAN
            }
        })
        .collect();
    let band = 4.0 * (24.0 / wn).sqrt();
    let normal_flags = kurtosis.iter().map(|k| (k - 3.0).abs() <= band).collect();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cb));
    let eig_a = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &ca));
    let min_eigenvalue = eig.eigenvalues.min().min(eig_a.eigenvalues.min());
    Ok(CltDiagnostic {
        n,
        walks,
        covariance_n: ca,
        covariance_4n: cb,
        scale_ratio: ratio,
        scale_stable: stable,
        kurtosis,
        normal_flags,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterStream;

    fn pareto(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut s = CounterStream::new(seed);
        (0..n).map(|_| s.next_f64().powf(-1.0 / alpha)).collect()
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let xs = pareto(1.0, 100_000, 5);
        let est = hill(&xs, Some(1000)).unwrap();
        assert!((est.index - 1.0).abs() < 0.07, "{est:?}");
        assert!(est.ci.contains(1.0));
    }

    #[test]
    fn hill_coverage_over_repetitions() {
        for alpha in [0.5, 1.0, 2.0] {
            let covered = (0..100)
                .filter(|&r| hill(&pareto(alpha, 100_000, 1000 + r), Some(1000)).unwrap().ci.contains(alpha))
                .count();
            assert!(covered >= 95, "alpha {alpha}: {covered}/100");
        }
    }

    #[test]
    fn hill_errors() {
        assert!(matches!(hill(&[3.0; 1000], None), Err(Error::NoTail { .. })));
        let mut xs = pareto(1.0, 1000, 1);
        xs[3] = -1.0;
        assert!(matches!(hill(&xs, None), Err(Error::Parameter(_))));
        assert!(matches!(hill(&pareto(1.0, 50, 1), None), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn exponential_index_tracks_threshold() {
        // light tail: the index is roughly the log-threshold ln(n/k)
        let mut s = CounterStream::new(17);
        let xs: Vec<f64> = (0..100_000).map(|_| -s.next_f64().ln()).collect();
        let deep = hill(&xs, Some(100)).unwrap().index;
        let shallow = hill(&xs, Some(10_000)).unwrap().index;
        assert!(deep > shallow);
        assert!(deep > 4.0, "{deep}");
    }

    #[test]
    fn verdict_thresholds() {
        let e = |lo: f64, hi: f64| TailIndexEstimate {
            index: 0.5 * (lo + hi),
            ci: Interval::new(lo, hi),
            k: 100,
            n: 10_000,
        };
        assert_eq!(moment_verdict(&e(0.5, 0.9), 1.0), MomentVerdict::MomentAppearsInfinite);
        assert_eq!(moment_verdict(&e(1.3, 1.6), 1.0), MomentVerdict::MomentAppearsFinite);
        assert_eq!(moment_verdict(&e(0.9, 1.2), 1.0), MomentVerdict::Inconclusive);
        let (v, est) = sample_moment_verdict(&[2.0; 500], 1.0, None).unwrap();
        assert_eq!(v, MomentVerdict::MomentAppearsFinite);
        assert!(est.is_none());
    }

    #[test]
    fn wilson_known_values() {
        let ci = wilson(50, 100, Z95);
        assert!((ci.lo - 0.4038).abs() < 1e-3 && (ci.hi - 0.5962).abs() < 1e-3);
        let ci = wilson(0, 100, Z95);
        assert_eq!(ci.lo, 0.0);
        assert!(ci.hi > 0.03 && ci.hi < 0.04);
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let mut s = CounterStream::new(3);
        let a: Vec<f64> = (0..2000).map(|_| s.next_f64()).collect();
        let b: Vec<f64> = (0..2000).map(|_| s.next_f64()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().passes());
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        assert!(!ks_two_sample(&a, &c).unwrap().passes());
        // hand-computed: {1,2,3} vs {2.5} → max |F - G| = 2/3
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5]).unwrap();
        assert!((r.statistic - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chi_square_pools_and_scores() {
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        // last two bins have expected 2 and 1: pooled into one
        let r = chi_square_gof(&[60, 37, 2, 1], &[0.6, 0.37, 0.02, 0.01]).unwrap();
        assert_eq!(r.bins, 2);
        let r = chi_square_gof(&[90, 10], &[0.5, 0.5]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn weighted_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = weighted_linear_fit(&x, &y, &[1.0, 2.0, 1.0, 0.5]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant() {
        let r = batch_means(&[1.5; 640], 32).unwrap();
        assert_eq!(r.mean, 1.5);
        assert!(r.ci.half_width() < 1e-12);
        assert!(batch_means(&[1.0; 10], 32).is_err());
        let q = ratio_batch_ci(&[2.0; 64], &[4.0; 64], 32).unwrap();
        assert_eq!(q.mean, 0.5);
    }

    #[test]
    fn clt_requires_enough_walks() {
        let xs = vec![vec![0.0, 0.0]; 100];
        assert!(matches!(clt_diagnostic(&xs, &xs, 10, &[0.0, 0.0]), Err(Error::InsufficientData(_))));
    }
}
