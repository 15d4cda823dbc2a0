//! Pooling and summarizing of MCMC draws: credible intervals, cross-site
//! medians per rate family, variability labels for the scaled variances, and
//! joint-scatter statistics, plus the convergence diagnostics used by tests.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::mcmc::ChainConfig;

/// Thinned, post-burn-in draws with parameter labels and chain provenance.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    names: Vec<String>,
    /// Row-major draws, `n_draws x names.len()`.
    draws: Vec<f64>,
    chain_ids: Vec<u32>,
    pub config: Option<ChainConfig>,
}

impl PosteriorSamples {
    pub fn from_rows(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        chain_ids: Vec<u32>,
        config: Option<ChainConfig>,
    ) -> Result<Self> {
        let width = names.len();
        if rows.len() != chain_ids.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: chain_ids.len() });
        }
        let mut draws = Vec::with_capacity(rows.len() * width);
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, found: row.len() });
            }
            draws.extend_from_slice(row);
        }
        Ok(PosteriorSamples { names, draws, chain_ids, config })
    }

    pub fn n_draws(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chain_ids(&self) -> &[u32] {
        &self.chain_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.names.len();
        &self.draws[i * w..(i + 1) * w]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParameter { name: name.into() })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        let w = self.names.len();
        Ok((0..self.n_draws()).map(|i| self.draws[i * w + k]).collect())
    }

    /// One column restricted to a single chain.
    pub fn chain_column(&self, name: &str, chain: u32) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        let w = self.names.len();
        Ok((0..self.n_draws())
            .filter(|&i| self.chain_ids[i] == chain)
            .map(|i| self.draws[i * w + k])
            .collect())
    }

    pub fn chains(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.chain_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Concatenate chains; draws keep their provenance and no reweighting is
    /// applied.
    pub fn pool(parts: Vec<PosteriorSamples>) -> Result<PosteriorSamples> {
        let mut iter = parts.into_iter();
        let mut first = iter.next().ok_or(Error::EmptyDataset)?;
        for part in iter {
            if part.names != first.names {
                return Err(Error::DimensionMismatch {
                    expected: first.names.len(),
                    found: part.names.len(),
                });
            }
            first.draws.extend_from_slice(&part.draws);
            first.chain_ids.extend_from_slice(&part.chain_ids);
        }
        Ok(first)
    }

    /// Check the column layout for `n_sites` sites: five site families
    /// (plus `b` when hierarchical), eleven hyperparameters, and the log
    /// posterior.
    pub fn validate_layout(&self, n_sites: usize, b_hierarchical: bool) -> Result<()> {
        let site_families = if b_hierarchical { 6 } else { 5 };
        let expected = site_families * n_sites + 11 + 1;
        if self.names.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: self.names.len() });
        }
        Ok(())
    }
}

/// Quantile by linear interpolation of order statistics (type 7):
/// `h = (n - 1) p`, interpolating between the flanking order statistics.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = math::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-tail credible interval plus the median: quantiles at
/// `(1 - coverage)/2` and `1 - (1 - coverage)/2`.
pub fn credible_interval(samples: &[f64], coverage: f64) -> Result<(f64, f64, f64)> {
    if samples.len() < 10 {
        return Err(Error::TooFewDraws { needed: 10, found: samples.len() });
    }
    assert!(coverage > 0.0 && coverage < 1.0, "coverage must be in (0,1)");
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - coverage) / 2.0;
    Ok((
        quantile_type7(&sorted, tail),
        quantile_type7(&sorted, 0.5),
        quantile_type7(&sorted, 1.0 - tail),
    ))
}

/// Site-level rate families that can be summarized across sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mu,
    DeltaP,
    DeltaD,
    C,
    M,
}

impl Family {
    /// Column prefix of the family's site parameters.
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Mu => "mu",
            Family::DeltaP => "dp",
            Family::DeltaD => "dd",
            Family::C => "c",
            Family::M => "m",
        }
    }

    /// Names of the family's mean and scaled-variance hyperparameters; the
    /// `m` family has no sampled mean (its centers are per-site).
    pub fn hyper_names(self) -> (Option<&'static str>, &'static str) {
        match self {
            Family::Mu => (Some("r_mu"), "g_mu"),
            Family::DeltaP => (Some("r_dp"), "g_dp"),
            Family::DeltaD => (Some("r_dd"), "g_dd"),
            Family::C => (Some("r_c"), "g_c"),
            Family::M => (None, "g_m"),
        }
    }
}

/// Posterior of one family: the cross-site median per draw with its interval,
/// the mean hyperparameter interval where one exists, and the interval and
/// interpretive label for `log10 g`.
#[derive(Debug, Clone)]
pub struct FamilySummary {
    pub family: Family,
    pub median_draws: Vec<f64>,
    pub median_rate: (f64, f64, f64),
    pub r: Option<(f64, f64, f64)>,
    pub log10_g: (f64, f64, f64),
    pub label: &'static str,
}

/// Summarize one rate family: for every retained draw take the median across
/// the S site-level values, then summarize that series. Medians rather than
/// means because a few outlying sites can dominate a cross-site mean.
pub fn family_summary(samples: &PosteriorSamples, family: Family, coverage: f64) -> Result<FamilySummary> {
    let prefix = family.prefix();
    let mut site_cols: Vec<usize> = Vec::new();
    let mut site = 1usize;
    loop {
        let name = alloc::format!("{prefix}.{site}");
        match samples.column_index(&name) {
            Ok(k) => site_cols.push(k),
            Err(_) => break,
        }
        site += 1;
    }
    if site_cols.is_empty() {
        return Err(Error::UnknownParameter { name: alloc::format!("{prefix}.1") });
    }
    let w = samples.names().len();
    let mut median_draws = Vec::with_capacity(samples.n_draws());
    let mut scratch = Vec::with_capacity(site_cols.len());
    for i in 0..samples.n_draws() {
        scratch.clear();
        scratch.extend(site_cols.iter().map(|&k| samples.draws[i * w + k]));
        scratch.sort_unstable_by(f64::total_cmp);
        median_draws.push(quantile_type7(&scratch, 0.5));
    }
    let median_rate = credible_interval(&median_draws, coverage)?;
    let (r_name, g_name) = family.hyper_names();
    let r = match r_name {
        Some(name) => Some(credible_interval(&samples.column(name)?, coverage)?),
        None => None,
    };
    let g = samples.column(g_name)?;
    let log_g: Vec<f64> = g.iter().map(|&x| math::log10(x)).collect();
    let log10_g = credible_interval(&log_g, coverage)?;
    Ok(FamilySummary {
        family,
        median_draws,
        median_rate,
        r,
        log10_g,
        label: variability_label(log10_g.1),
    })
}

/// Interpretive label for a scaled variance on the `log10` scale.
pub fn variability_label(log10_g: f64) -> &'static str {
    if log10_g < -3.0 {
        "Very low"
    } else if log10_g < -2.0 {
        "Low"
    } else if log10_g < -1.0 {
        "Medium"
    } else {
        "High"
    }
}

/// Paired draws of two parameters with their Pearson correlation and
/// least-squares line, for external plotting.
#[derive(Debug, Clone)]
pub struct Scatter {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub correlation: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Correlation and least-squares fit of raw paired series.
pub fn scatter_xy(xs: Vec<f64>, ys: Vec<f64>) -> Result<Scatter> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewDraws { needed: 2, found: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let (correlation, slope) = if sxx > 0.0 && syy > 0.0 {
        (sxy / math::sqrt(sxx * syy), sxy / sxx)
    } else {
        (0.0, 0.0)
    };
    let intercept = my - slope * mx;
    Ok(Scatter { xs, ys, correlation, slope, intercept })
}

/// [`scatter_xy`] over two named parameter columns.
pub fn joint_scatter(samples: &PosteriorSamples, param_x: &str, param_y: &str) -> Result<Scatter> {
    scatter_xy(samples.column(param_x)?, samples.column(param_y)?)
}

/// Split-chain potential scale reduction: each chain is halved and the
/// between/within variance ratio computed over the segments.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut segments: Vec<&[f64]> = Vec::new();
    for chain in chains {
        let half = chain.len() / 2;
        if half < 2 {
            continue;
        }
        segments.push(&chain[..half]);
        segments.push(&chain[half..half * 2]);
    }
    if segments.len() < 2 {
        return f64::NAN;
    }
    let n = segments.iter().map(|s| s.len()).min().unwrap() as f64;
    let m = segments.len() as f64;
    let means: Vec<f64> = segments.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mi| (mi - grand) * (mi - grand)).sum::<f64>();
    let w = segments
        .iter()
        .zip(&means)
        .map(|(s, mi)| s.iter().map(|x| (x - mi) * (x - mi)).sum::<f64>() / (s.len() as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return 1.0;
    }
    math::sqrt(((n - 1.0) / n * w + b / n) / w)
}

/// Lag-`k` autocorrelation of a series.
pub fn autocorrelation(series: &[f64], lag: usize) -> f64 {
    let n = series.len();
    if lag >= n {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.0;
    }
    let mut cov = 0.0;
    for i in 0..n - lag {
        cov += (series[i] - mean) * (series[i + lag] - mean);
    }
    cov / (n as f64 * var)
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.62762 / math::sqrt(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn quantile_examples() {
        let samples: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (lo, med, hi) = credible_interval(&samples, 0.8).unwrap();
        assert!((lo - 10.9).abs() < 1e-12);
        assert!((med - 50.5).abs() < 1e-12);
        assert!((hi - 90.1).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_collapse() {
        let samples = vec![3.25; 50];
        assert_eq!(credible_interval(&samples, 0.8).unwrap(), (3.25, 3.25, 3.25));
    }

    #[test]
    fn too_few_draws_is_an_error() {
        assert!(matches!(
            credible_interval(&[1.0; 5], 0.8).unwrap_err(),
            Error::TooFewDraws { .. }
        ));
    }

    #[test]
    fn widening_coverage_never_shrinks() {
        let mut rng = Rng::new(2);
        let samples: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for coverage in [0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
            let (lo, _, hi) = credible_interval(&samples, coverage).unwrap();
            assert!(lo <= prev.0 + 1e-12 && hi >= prev.1 - 1e-12, "coverage {coverage}");
            prev = (lo, hi);
        }
    }

    #[test]
    fn symmetric_samples_median_close_to_mean() {
        let mut rng = Rng::new(8);
        let samples: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (_, med, _) = credible_interval(&samples, 0.8).unwrap();
        assert!((med - mean).abs() < 0.03);
    }

    #[test]
    fn label_breakpoints() {
        assert_eq!(variability_label(-3.5), "Very low");
        assert_eq!(variability_label(-3.0), "Low");
        assert_eq!(variability_label(-2.5), "Low");
        assert_eq!(variability_label(-2.0), "Medium");
        assert_eq!(variability_label(-1.5), "Medium");
        assert_eq!(variability_label(-1.0), "High");
        assert_eq!(variability_label(-0.2), "High");
        assert_eq!(variability_label(5.0), "High");
    }

    fn toy_samples(n_draws: usize, seed: u64) -> PosteriorSamples {
        // Two sites, minimal hyper block.
        let names: Vec<String> = ["mu.1", "mu.2", "m.1", "m.2", "r_mu", "g_mu", "g_m", "logpost"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..n_draws)
            .map(|_| {
                let r = 0.9 + 0.02 * rng.normal();
                vec![
                    r + 0.01 * rng.normal(),
                    r + 0.01 * rng.normal(),
                    0.8,
                    0.82,
                    r,
                    0.001 * (1.0 + 0.1 * rng.normal().abs()),
                    0.01,
                    -100.0 + rng.normal(),
                ]
            })
            .collect();
        PosteriorSamples::from_rows(names, rows, vec![0; n_draws], None).unwrap()
    }

    #[test]
    fn family_summary_medians() {
        let samples = toy_samples(200, 3);
        let summary = family_summary(&samples, Family::Mu, 0.8).unwrap();
        assert_eq!(summary.median_draws.len(), 200);
        // Per-draw median of two values is their average.
        let m0 = (samples.row(0)[0] + samples.row(0)[1]) / 2.0;
        assert!((summary.median_draws[0] - m0).abs() < 1e-12);
        assert!(summary.r.is_some());
        assert_eq!(summary.label, variability_label(summary.log10_g.1));
    }

    #[test]
    fn family_summary_single_site_is_identity() {
        let names: Vec<String> =
            ["mu.1", "g_mu", "r_mu", "logpost"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![0.5 + i as f64 * 1e-3, 0.01, 0.5, 0.0]).collect();
        let samples = PosteriorSamples::from_rows(names, rows, vec![0; 50], None).unwrap();
        let summary = family_summary(&samples, Family::Mu, 0.8).unwrap();
        for (i, v) in summary.median_draws.iter().enumerate() {
            assert_eq!(*v, 0.5 + i as f64 * 1e-3);
        }
    }

    #[test]
    fn scatter_self_correlation_is_one() {
        let samples = toy_samples(300, 5);
        let s = joint_scatter(&samples, "r_mu", "r_mu").unwrap();
        assert!((s.correlation - 1.0).abs() < 1e-12);
        assert!((s.slope - 1.0).abs() < 1e-12);
        assert!(s.intercept.abs() < 1e-10);
    }

    #[test]
    fn scatter_independent_near_zero() {
        let mut rng = Rng::new(77);
        let xs: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let ys: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let s = scatter_xy(xs, ys).unwrap();
        assert!(s.correlation.abs() < 0.05, "corr {}", s.correlation);
    }

    #[test]
    fn pooling_is_concatenation() {
        let a = toy_samples(100, 1);
        let mut b = toy_samples(60, 2);
        b.chain_ids = vec![1; 60];
        let pooled = PosteriorSamples::pool(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(pooled.n_draws(), 160);
        let col = pooled.column("r_mu").unwrap();
        let mut expected = a.column("r_mu").unwrap();
        expected.extend(b.column("r_mu").unwrap());
        assert_eq!(col, expected);
        assert_eq!(pooled.chains(), vec![0, 1]);
    }

    #[test]
    fn rhat_for_identical_chains_is_near_one() {
        let mut rng = Rng::new(12);
        let a: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
        let r = split_rhat(&[a, b]);
        assert!((r - 1.0).abs() < 0.05, "rhat {r}");
    }

    #[test]
    fn rhat_detects_disagreement() {
        let mut rng = Rng::new(13);
        let a: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..1000).map(|_| 5.0 + rng.normal()).collect();
        assert!(split_rhat(&[a, b]) > 1.5);
    }

    #[test]
    fn ks_uniform_sanity() {
        let mut rng = Rng::new(14);
        let xs: Vec<f64> = (0..2000).map(|_| rng.uniform()).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < ks_critical_001(2000), "d {d}");
        let skewed: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_statistic(&skewed, |x| x.clamp(0.0, 1.0)) > ks_critical_001(2000));
    }

    #[test]
    fn autocorrelation_of_noise_is_small() {
        let mut rng = Rng::new(15);
        let xs: Vec<f64> = (0..5000).map(|_| rng.normal()).collect();
        assert!(autocorrelation(&xs, 1).abs() < 0.05);
        assert!((autocorrelation(&xs, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_validation() {
        let mut names: Vec<String> = Vec::new();
        for fam in ["mu", "dp", "dd", "m", "c"] {
            for j in 1..=3 {
                names.push(format!("{fam}.{j}"));
            }
        }
        for h in ["r_mu", "g_mu", "r_dp", "g_dp", "r_dd", "g_dd", "r_b", "g_b", "r_c", "g_c", "g_m"] {
            names.push(h.to_string());
        }
        names.push("logpost".to_string());
        let rows = vec![vec![0.5; names.len()]; 12];
        let samples = PosteriorSamples::from_rows(names, rows, vec![0; 12], None).unwrap();
        samples.validate_layout(3, false).unwrap();
        assert!(samples.validate_layout(3, true).is_err());
        assert!(samples.validate_layout(4, false).is_err());
    }
}
