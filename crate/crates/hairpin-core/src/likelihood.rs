//! Exact log-likelihoods for datasets of unordered double-stranded patterns,
//! plus an incremental evaluator for single-site MCMC updates.
//!
//! Per-site probabilities stay in the linear domain (at most eight
//! nonnegative terms); accumulation across sites and patterns happens in log
//! space, with log-sum-exp over the two strand-type assignments. Patterns of
//! probability zero yield `-inf` rather than an error; the sampler treats
//! `-inf` as an automatic rejection.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::{site_obs_table, MethylationPattern, SiteParams, SiteRates};

/// A collection of patterns sharing a common number of sites.
#[derive(Debug, Clone)]
pub struct Dataset {
    patterns: Vec<MethylationPattern>,
    pub source: String,
}

impl Dataset {
    pub fn new(patterns: Vec<MethylationPattern>, source: impl Into<String>) -> Result<Self> {
        let first = patterns.first().ok_or(Error::EmptyDataset)?;
        let s = first.n_sites();
        for p in &patterns {
            if p.n_sites() != s {
                return Err(Error::DimensionMismatch { expected: s, found: p.n_sites() });
            }
        }
        Ok(Dataset { patterns, source: source.into() })
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn n_sites(&self) -> usize {
        self.patterns[0].n_sites()
    }

    pub fn patterns(&self) -> &[MethylationPattern] {
        &self.patterns
    }

    /// Observed fractions of doubly methylated, hemimethylated, and doubly
    /// unmethylated dyads, pooled over patterns and sites.
    pub fn dyad_fractions(&self) -> (f64, f64, f64) {
        let (mut both, mut hemi, mut neither) = (0usize, 0usize, 0usize);
        for p in &self.patterns {
            for j in 0..p.n_sites() {
                match (p.strand_a[j], p.strand_b[j]) {
                    (true, true) => both += 1,
                    (false, false) => neither += 1,
                    _ => hemi += 1,
                }
            }
        }
        let total = (both + hemi + neither) as f64;
        (both as f64 / total, hemi as f64 / total, neither as f64 / total)
    }
}

fn check_dims(len_x: usize, len_y: usize, rates: &SiteRates) -> Result<()> {
    if len_x != len_y {
        return Err(Error::DimensionMismatch { expected: len_x, found: len_y });
    }
    if len_x != rates.n_sites() {
        return Err(Error::DimensionMismatch { expected: rates.n_sites(), found: len_x });
    }
    Ok(())
}

/// Log-probability of observing ordered strands `(x, y)`, with `x` from the
/// post-replication parent and `y` from the daughter. `-inf` when the pattern
/// is impossible under `rates`.
pub fn ordered_loglik(x: &[bool], y: &[bool], rates: &SiteRates, with_error: bool) -> Result<f64> {
    check_dims(x.len(), y.len(), rates)?;
    let mut total = 0.0;
    for j in 0..x.len() {
        let p = crate::model::single_site_joint(x[j], y[j], j, rates, with_error);
        if p == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += math::ln(p);
    }
    Ok(total)
}

/// Log-probability of an unordered pattern: both strand-type assignments are
/// marginalized, with the half weight applied when the strands coincide.
pub fn pattern_loglik(pat: &MethylationPattern, rates: &SiteRates, with_error: bool) -> Result<f64> {
    let fwd = ordered_loglik(&pat.strand_a, &pat.strand_b, rates, with_error)?;
    let rev = ordered_loglik(&pat.strand_b, &pat.strand_a, rates, with_error)?;
    let half = if pat.strands_equal() { -core::f64::consts::LN_2 } else { 0.0 };
    Ok(half + math::log_sum_exp(fwd, rev))
}

/// Sum of [`pattern_loglik`] over all patterns (cold evaluation).
pub fn dataset_loglik(data: &Dataset, rates: &SiteRates, with_error: bool) -> Result<f64> {
    let mut total = 0.0;
    for pat in data.patterns() {
        total += pattern_loglik(pat, rates, with_error)?;
    }
    Ok(total)
}

const CLASSES: usize = 4; // (x, y) in {0,1}^2, encoded 2x + y

#[inline]
fn swap_class(c: u8) -> u8 {
    // (x, y) -> (y, x)
    match c {
        1 => 2,
        2 => 1,
        other => other,
    }
}

/// Incremental dataset log-likelihood, owned by a single MCMC chain.
///
/// The cache stores per-site log observation tables and, per pattern and
/// strand orientation, the running sum of log site factors; a single-site
/// rate change then costs O(patterns) instead of O(patterns x sites).
/// Impossible sites are tracked by count so `-inf` never enters arithmetic.
#[derive(Debug, Clone)]
pub struct DatasetLikelihood {
    with_error: bool,
    n_patterns: usize,
    n_sites: usize,
    /// Class of (strand_a[j], strand_b[j]) per pattern, row-major.
    classes: Vec<u8>,
    strands_equal: Vec<bool>,
    /// Per site, log probability of each observable class.
    ln_tables: Vec<[f64; CLASSES]>,
    /// Per (pattern, orientation): sum of finite log factors.
    fin_sum: Vec<f64>,
    /// Per (pattern, orientation): number of `-inf` log factors.
    ninf: Vec<u32>,
    pattern_ll: Vec<f64>,
    total: f64,
    /// Staged single-site proposal, applied by [`Self::commit_pending`].
    /// The scratch buffers are reused across proposals to avoid allocation.
    pending: Option<(usize, [f64; CLASSES], f64)>,
    scratch_fin_sum: Vec<f64>,
    scratch_ninf: Vec<u32>,
    scratch_pattern_ll: Vec<f64>,
}

fn ln_table(params: &SiteParams, with_error: bool) -> [f64; CLASSES] {
    let t = site_obs_table(params, with_error);
    let ln = |p: f64| if p > 0.0 { math::ln(p) } else { f64::NEG_INFINITY };
    [ln(t[0][0]), ln(t[0][1]), ln(t[1][0]), ln(t[1][1])]
}

impl DatasetLikelihood {
    pub fn new(data: &Dataset, rates: &SiteRates, with_error: bool) -> Result<Self> {
        if data.n_sites() != rates.n_sites() {
            return Err(Error::DimensionMismatch { expected: rates.n_sites(), found: data.n_sites() });
        }
        let n = data.n_patterns();
        let s = data.n_sites();
        let mut classes = Vec::with_capacity(n * s);
        let mut strands_equal = Vec::with_capacity(n);
        for pat in data.patterns() {
            strands_equal.push(pat.strands_equal());
            for j in 0..s {
                classes.push(((pat.strand_a[j] as u8) << 1) | pat.strand_b[j] as u8);
            }
        }
        let mut cache = DatasetLikelihood {
            with_error,
            n_patterns: n,
            n_sites: s,
            classes,
            strands_equal,
            ln_tables: Vec::new(),
            fin_sum: Vec::new(),
            ninf: Vec::new(),
            pattern_ll: Vec::new(),
            total: 0.0,
            pending: None,
            scratch_fin_sum: Vec::new(),
            scratch_ninf: Vec::new(),
            scratch_pattern_ll: Vec::new(),
        };
        cache.rebuild(rates);
        Ok(cache)
    }

    pub fn with_error(&self) -> bool {
        self.with_error
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Recompute every table and running sum from scratch. Also used
    /// periodically to shed accumulated floating-point drift.
    pub fn rebuild(&mut self, rates: &SiteRates) {
        debug_assert_eq!(rates.n_sites(), self.n_sites);
        self.pending = None;
        self.ln_tables.clear();
        for j in 0..self.n_sites {
            self.ln_tables.push(ln_table(&rates.site(j), self.with_error));
        }
        self.fin_sum.clear();
        self.fin_sum.resize(self.n_patterns * 2, 0.0);
        self.ninf.clear();
        self.ninf.resize(self.n_patterns * 2, 0);
        self.pattern_ll.clear();
        self.pattern_ll.resize(self.n_patterns, 0.0);
        let mut total = 0.0;
        for i in 0..self.n_patterns {
            for o in 0..2usize {
                let (mut acc, mut bad) = (0.0, 0u32);
                for j in 0..self.n_sites {
                    let mut cls = self.classes[i * self.n_sites + j];
                    if o == 1 {
                        cls = swap_class(cls);
                    }
                    let lnf = self.ln_tables[j][cls as usize];
                    if lnf == f64::NEG_INFINITY {
                        bad += 1;
                    } else {
                        acc += lnf;
                    }
                }
                self.fin_sum[i * 2 + o] = acc;
                self.ninf[i * 2 + o] = bad;
            }
            let ll = self.pattern_ll_from_sums(i, self.fin_sum[i * 2], self.ninf[i * 2], self.fin_sum[i * 2 + 1], self.ninf[i * 2 + 1]);
            self.pattern_ll[i] = ll;
            total += ll;
        }
        self.total = total;
    }

    #[inline]
    fn pattern_ll_from_sums(&self, i: usize, s0: f64, n0: u32, s1: f64, n1: u32) -> f64 {
        let a = if n0 > 0 { f64::NEG_INFINITY } else { s0 };
        let b = if n1 > 0 { f64::NEG_INFINITY } else { s1 };
        let half = if self.strands_equal[i] { -core::f64::consts::LN_2 } else { 0.0 };
        half + math::log_sum_exp(a, b)
    }

    /// Total log-likelihood at arbitrary full rates without touching the
    /// cache. Used for whole-family proposals.
    pub fn total_for(&self, rates: &SiteRates) -> f64 {
        let tables: Vec<[f64; CLASSES]> =
            (0..self.n_sites).map(|j| ln_table(&rates.site(j), self.with_error)).collect();
        let mut total = 0.0;
        for i in 0..self.n_patterns {
            let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0u32, 0.0, 0u32);
            for j in 0..self.n_sites {
                let cls = self.classes[i * self.n_sites + j];
                let f0 = tables[j][cls as usize];
                let f1 = tables[j][swap_class(cls) as usize];
                if f0 == f64::NEG_INFINITY {
                    n0 += 1;
                } else {
                    s0 += f0;
                }
                if f1 == f64::NEG_INFINITY {
                    n1 += 1;
                } else {
                    s1 += f1;
                }
            }
            total += self.pattern_ll_from_sums(i, s0, n0, s1, n1);
        }
        total
    }

    /// Stage new rates for site `j` and return the resulting change in total
    /// log-likelihood. Call [`Self::commit_pending`] to keep the move or
    /// [`Self::clear_pending`] to drop it; the visible state is unchanged
    /// until then.
    pub fn propose_site(&mut self, j: usize, params: &SiteParams) -> f64 {
        let new_table = ln_table(params, self.with_error);
        let old_table = &self.ln_tables[j];
        self.scratch_fin_sum.clear();
        self.scratch_fin_sum.extend_from_slice(&self.fin_sum);
        self.scratch_ninf.clear();
        self.scratch_ninf.extend_from_slice(&self.ninf);
        self.scratch_pattern_ll.clear();
        self.scratch_pattern_ll.extend_from_slice(&self.pattern_ll);
        let mut total = 0.0;
        for i in 0..self.n_patterns {
            let cls = self.classes[i * self.n_sites + j];
            let mut changed = false;
            for o in 0..2usize {
                let c = if o == 0 { cls } else { swap_class(cls) };
                let old = old_table[c as usize];
                let new = new_table[c as usize];
                if old == new {
                    continue;
                }
                changed = true;
                let slot = i * 2 + o;
                if old == f64::NEG_INFINITY {
                    self.scratch_ninf[slot] -= 1;
                } else {
                    self.scratch_fin_sum[slot] -= old;
                }
                if new == f64::NEG_INFINITY {
                    self.scratch_ninf[slot] += 1;
                } else {
                    self.scratch_fin_sum[slot] += new;
                }
            }
            if changed {
                self.scratch_pattern_ll[i] = self.pattern_ll_from_sums(
                    i,
                    self.scratch_fin_sum[i * 2],
                    self.scratch_ninf[i * 2],
                    self.scratch_fin_sum[i * 2 + 1],
                    self.scratch_ninf[i * 2 + 1],
                );
            }
            total += self.scratch_pattern_ll[i];
        }
        let delta = total - self.total;
        self.pending = Some((j, new_table, total));
        delta
    }

    pub fn commit_pending(&mut self) {
        let (site, table, total) = self.pending.take().expect("no staged site proposal");
        self.ln_tables[site] = table;
        core::mem::swap(&mut self.fin_sum, &mut self.scratch_fin_sum);
        core::mem::swap(&mut self.ninf, &mut self.scratch_ninf);
        core::mem::swap(&mut self.pattern_ll, &mut self.scratch_pattern_ll);
        self.total = total;
    }

    pub fn clear_pending(&mut self) {
        self.pending = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MethylationPattern;
    use crate::rng::Rng;
    use alloc::format;
    use alloc::vec;

    fn pat(a: &[u8], b: &[u8]) -> MethylationPattern {
        MethylationPattern::new(
            a.iter().map(|&x| x == 1).collect(),
            b.iter().map(|&x| x == 1).collect(),
            "t",
        )
        .unwrap()
    }

    fn random_rates(rng: &mut Rng, s: usize) -> SiteRates {
        SiteRates::new(
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.0, 0.2)).collect(),
            (0..s).map(|_| rng.uniform_in(0.0, 0.2)).collect(),
        )
        .unwrap()
    }

    /// All distinct unordered strand pairs of length `s`.
    fn unordered_pairs(s: usize) -> Vec<MethylationPattern> {
        let n = 1usize << s;
        let strand = |k: usize| (0..s).map(|j| (k >> j) & 1 == 1).collect::<Vec<bool>>();
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a..n {
                pairs.push(MethylationPattern::new(strand(a), strand(b), format!("{a}-{b}")).unwrap());
            }
        }
        pairs
    }

    #[test]
    fn deterministic_single_site() {
        let rates = SiteRates::shared(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1).unwrap();
        let ll = pattern_loglik(&pat(&[1], &[1]), &rates, false).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn factorizes_over_sites() {
        let mut rng = Rng::new(11);
        let rates2 = random_rates(&mut rng, 2);
        let sub = |j: usize| {
            SiteRates::new(
                vec![rates2.mu[j]],
                vec![rates2.delta_p[j]],
                vec![rates2.delta_d[j]],
                vec![rates2.m[j]],
                vec![rates2.b[j]],
                vec![rates2.c[j]],
            )
            .unwrap()
        };
        for with_error in [false, true] {
            let whole = ordered_loglik(&[true, false], &[false, false], &rates2, with_error).unwrap();
            let part = ordered_loglik(&[true], &[false], &sub(0), with_error).unwrap()
                + ordered_loglik(&[false], &[false], &sub(1), with_error).unwrap();
            assert!((whole - part).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pattern_identity() {
        let mut rng = Rng::new(3);
        let rates = random_rates(&mut rng, 3);
        let p = pat(&[1, 0, 1], &[1, 0, 1]);
        let ll = pattern_loglik(&p, &rates, true).unwrap();
        let ordered = ordered_loglik(&p.strand_a, &p.strand_b, &rates, true).unwrap();
        assert!((ll - ordered).abs() < 1e-12);
    }

    #[test]
    fn unordered_symmetry() {
        let mut rng = Rng::new(4);
        let rates = random_rates(&mut rng, 3);
        let fwd = pattern_loglik(&pat(&[1, 0, 0], &[0, 1, 1]), &rates, true).unwrap();
        let rev = pattern_loglik(&pat(&[0, 1, 1], &[1, 0, 0]), &rates, true).unwrap();
        assert!((fwd - rev).abs() < 1e-13);
    }

    #[test]
    fn normalizes_over_unordered_pairs() {
        let mut rng = Rng::new(5);
        for s in [1usize, 2] {
            for with_error in [false, true] {
                for _ in 0..20 {
                    let rates = random_rates(&mut rng, s);
                    let total: f64 = unordered_pairs(s)
                        .iter()
                        .map(|p| math::exp(pattern_loglik(p, &rates, with_error).unwrap()))
                        .sum();
                    assert!((total - 1.0).abs() < 1e-12, "s={s} err={with_error} total={total}");
                }
            }
        }
        assert_eq!(unordered_pairs(2).len(), 10);
    }

    #[test]
    fn duplicate_dataset_doubles_loglik() {
        let mut rng = Rng::new(6);
        let rates = random_rates(&mut rng, 2);
        let patterns = vec![pat(&[1, 0], &[1, 1]), pat(&[0, 0], &[0, 0])];
        let once = Dataset::new(patterns.clone(), "once").unwrap();
        let twice = Dataset::new([patterns.clone(), patterns].concat(), "twice").unwrap();
        let a = dataset_loglik(&once, &rates, true).unwrap();
        let b = dataset_loglik(&twice, &rates, true).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn single_pattern_dataset_equals_pattern() {
        let mut rng = Rng::new(7);
        let rates = random_rates(&mut rng, 2);
        let p = pat(&[1, 0], &[0, 1]);
        let d = Dataset::new(vec![p.clone()], "one").unwrap();
        assert_eq!(dataset_loglik(&d, &rates, true).unwrap(), pattern_loglik(&p, &rates, true).unwrap());
    }

    #[test]
    fn impossible_pattern_is_neg_infinity() {
        // mu = 1, m = 1, no errors: only (1,1) observable.
        let rates = SiteRates::shared(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2).unwrap();
        let ll = pattern_loglik(&pat(&[1, 0], &[1, 1]), &rates, false).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.0, 0.0, 3).unwrap();
        assert!(ordered_loglik(&[true], &[true], &rates, false).is_err());
        assert!(ordered_loglik(&[true, false, true], &[true, false], &rates, false).is_err());
    }

    #[test]
    fn incremental_matches_cold_after_site_updates() {
        let mut rng = Rng::new(21);
        let mut rates = random_rates(&mut rng, 4);
        let patterns: Vec<MethylationPattern> = (0..6)
            .map(|i| {
                let a: Vec<bool> = (0..4).map(|_| rng.bernoulli(0.7)).collect();
                let b: Vec<bool> = (0..4).map(|_| rng.bernoulli(0.7)).collect();
                MethylationPattern::new(a, b, format!("p{i}")).unwrap()
            })
            .collect();
        let data = Dataset::new(patterns, "rand").unwrap();
        let mut cache = DatasetLikelihood::new(&data, &rates, true).unwrap();
        for step in 0..40 {
            let j = rng.index(4);
            let mut params = rates.site(j);
            match step % 5 {
                0 => params.mu = rng.uniform_in(0.02, 0.98),
                1 => params.delta_p = rng.uniform_in(0.02, 0.98),
                2 => params.delta_d = rng.uniform_in(0.02, 0.98),
                3 => params.m = rng.uniform_in(0.02, 0.98),
                _ => params.c = rng.uniform_in(0.0, 0.2),
            }
            let before = cache.total();
            let delta = cache.propose_site(j, &params);
            if rng.bernoulli(0.5) {
                cache.commit_pending();
                rates.set_site(j, &params);
                assert!((cache.total() - (before + delta)).abs() < 1e-9);
            } else {
                cache.clear_pending();
                assert_eq!(cache.total(), before);
            }
            let cold = dataset_loglik(&data, &rates, true).unwrap();
            assert!(
                (cache.total() - cold).abs() < 1e-9,
                "step {step}: cached {} vs cold {cold}",
                cache.total()
            );
        }
    }

    #[test]
    fn incremental_handles_impossible_regions() {
        // Start in a state where a pattern is impossible, then move out of it.
        let data = Dataset::new(vec![pat(&[1, 0], &[1, 1])], "edge").unwrap();
        let mut rates = SiteRates::shared(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2).unwrap();
        let mut cache = DatasetLikelihood::new(&data, &rates, false).unwrap();
        assert_eq!(cache.total(), f64::NEG_INFINITY);
        let mut params = rates.site(1);
        params.mu = 0.9;
        params.m = 0.8;
        let delta = cache.propose_site(1, &params);
        assert!(delta.is_finite() || delta == f64::INFINITY);
        cache.commit_pending();
        rates.set_site(1, &params);
        let cold = dataset_loglik(&data, &rates, false).unwrap();
        assert!((cache.total() - cold).abs() < 1e-12);
        assert!(cache.total().is_finite());
    }

    #[test]
    fn total_for_matches_cold() {
        let mut rng = Rng::new(31);
        let rates = random_rates(&mut rng, 3);
        let other = random_rates(&mut rng, 3);
        let patterns: Vec<MethylationPattern> = (0..5)
            .map(|i| {
                let a: Vec<bool> = (0..3).map(|_| rng.bernoulli(0.6)).collect();
                let b: Vec<bool> = (0..3).map(|_| rng.bernoulli(0.6)).collect();
                MethylationPattern::new(a, b, format!("p{i}")).unwrap()
            })
            .collect();
        let data = Dataset::new(patterns, "rand").unwrap();
        let cache = DatasetLikelihood::new(&data, &rates, true).unwrap();
        let cold = dataset_loglik(&data, &other, true).unwrap();
        assert!((cache.total_for(&other) - cold).abs() < 1e-10);
        // and the cache itself is untouched
        let orig = dataset_loglik(&data, &rates, true).unwrap();
        assert!((cache.total() - orig).abs() < 1e-10);
    }

    #[test]
    fn all_ones_loglik_monotone_in_m_and_mu() {
        let data = Dataset::new(vec![pat(&[1, 1], &[1, 1]); 3], "ones").unwrap();
        let grid = [0.05, 0.2, 0.4, 0.6, 0.8, 0.95];
        for j in 0..2 {
            let mut prev = f64::NEG_INFINITY;
            for &v in &grid {
                let mut rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.003, 0.016, 2).unwrap();
                rates.m[j] = v;
                let ll = dataset_loglik(&data, &rates, true).unwrap();
                assert!(ll >= prev, "m[{j}]={v}");
                prev = ll;
            }
            let mut prev = f64::NEG_INFINITY;
            for &v in &grid {
                let mut rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.003, 0.016, 2).unwrap();
                rates.mu[j] = v;
                let ll = dataset_loglik(&data, &rates, true).unwrap();
                assert!(ll >= prev, "mu[{j}]={v}");
                prev = ll;
            }
        }
    }

    #[test]
    fn dataset_requires_uniform_length() {
        let err = Dataset::new(vec![pat(&[1], &[0]), pat(&[1, 0], &[0, 0])], "bad");
        assert!(matches!(err.unwrap_err(), Error::DimensionMismatch { .. }));
        assert!(matches!(Dataset::new(vec![], "empty").unwrap_err(), Error::EmptyDataset));
    }
}
