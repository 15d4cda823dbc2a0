//! Expectation-maximization and a flat-prior Metropolis fit for the
//! shared-rate model (one `(mu, dp, dd, m, c)` across all sites), used to
//! cross-check the hierarchical sampler.
//!
//! With shared rates every site has the same observation table, so a pattern
//! contributes only through its per-orientation counts of the four observable
//! classes. Both fitters run on that compressed representation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::math::{exp, ln, ln_1p, log_sum_exp, logit, sigmoid};
use crate::mcmc::StepSizeAdapter;
use crate::model::{error_prob, event_prob, site_obs_table, SiteParams};
use crate::rng::Rng;

/// Per-pattern, per-orientation counts of the observable classes
/// (class = 2x + y).
struct ClassCounts {
    /// `counts[i][o][class]` with orientation 1 the strand swap.
    counts: Vec<[[f64; 4]; 2]>,
    strands_equal: Vec<bool>,
}

impl ClassCounts {
    fn new(data: &Dataset) -> Self {
        let mut counts = Vec::with_capacity(data.n_patterns());
        let mut strands_equal = Vec::with_capacity(data.n_patterns());
        for pat in data.patterns() {
            let mut row = [[0.0f64; 4]; 2];
            for j in 0..pat.n_sites() {
                let (x, y) = (pat.strand_a[j] as usize, pat.strand_b[j] as usize);
                row[0][2 * x + y] += 1.0;
                row[1][2 * y + x] += 1.0;
            }
            counts.push(row);
            strands_equal.push(pat.strands_equal());
        }
        ClassCounts { counts, strands_equal }
    }

    /// Dataset log-likelihood for shared rates.
    fn loglik(&self, params: &SiteParams, with_error: bool) -> f64 {
        let table = site_obs_table(params, with_error);
        let lnt = [
            safe_ln(table[0][0]),
            safe_ln(table[0][1]),
            safe_ln(table[1][0]),
            safe_ln(table[1][1]),
        ];
        let mut total = 0.0;
        for (row, same) in self.counts.iter().zip(&self.strands_equal) {
            let dot = |o: usize| -> f64 {
                let mut acc = 0.0;
                for cls in 0..4 {
                    if row[o][cls] > 0.0 {
                        if lnt[cls] == f64::NEG_INFINITY {
                            return f64::NEG_INFINITY;
                        }
                        acc += row[o][cls] * lnt[cls];
                    }
                }
                acc
            };
            let half = if *same { -core::f64::consts::LN_2 } else { 0.0 };
            total += half + log_sum_exp(dot(0), dot(1));
        }
        total
    }
}

#[inline]
fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        ln(p)
    } else {
        f64::NEG_INFINITY
    }
}

/// Optional pins holding selected shared parameters fixed during EM.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmPins {
    pub mu: Option<f64>,
    pub delta_p: Option<f64>,
    pub delta_d: Option<f64>,
    pub m: Option<f64>,
    pub c: Option<f64>,
}

/// EM result: the shared parameter estimates and the log-likelihood trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: SiteParams,
    pub loglik: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Expected sufficient statistics contributed by one site of a given
/// observable class, under the current parameters.
#[derive(Debug, Clone, Copy, Default)]
struct ClassStats {
    p1: f64,
    p1_d1: f64,
    p0_q1: f64,
    p0_d1: f64,
    truth1: f64,
    truth1_read0: f64,
}

fn class_stats(params: &SiteParams, with_error: bool) -> [ClassStats; 4] {
    let (b, c) = if with_error { (params.b, params.c) } else { (0.0, 0.0) };
    let mut out = [ClassStats::default(); 4];
    for (cls, stats) in out.iter_mut().enumerate() {
        let x = cls >> 1 & 1 == 1;
        let y = cls & 1 == 1;
        let mut norm = 0.0;
        let mut acc = ClassStats::default();
        for p in [false, true] {
            let parent = if p { params.m } else { 1.0 - params.m };
            for q in [false, true] {
                for d in [false, true] {
                    let w = parent
                        * event_prob(q, d, p, params.mu, params.delta_p, params.delta_d)
                        * error_prob(x, q, b, c)
                        * error_prob(y, d, b, c);
                    if w == 0.0 {
                        continue;
                    }
                    norm += w;
                    if p {
                        acc.p1 += w;
                        if d {
                            acc.p1_d1 += w;
                        }
                    } else {
                        if q {
                            acc.p0_q1 += w;
                        }
                        if d {
                            acc.p0_d1 += w;
                        }
                    }
                    if q {
                        acc.truth1 += w;
                        if !x {
                            acc.truth1_read0 += w;
                        }
                    }
                    if d {
                        acc.truth1 += w;
                        if !y {
                            acc.truth1_read0 += w;
                        }
                    }
                }
            }
        }
        if norm > 0.0 {
            *stats = ClassStats {
                p1: acc.p1 / norm,
                p1_d1: acc.p1_d1 / norm,
                p0_q1: acc.p0_q1 / norm,
                p0_d1: acc.p0_d1 / norm,
                truth1: acc.truth1 / norm,
                truth1_read0: acc.truth1_read0 / norm,
            };
        }
    }
    out
}

/// Maximum-likelihood fit of the shared-rate model by EM; the latent space
/// per site is the strand assignment together with `(p, q, d)`, and the
/// E-step is exact enumeration. `b` stays pinned at `b_fixed` throughout.
pub fn em_fit(
    data: &Dataset,
    with_error: bool,
    b_fixed: f64,
    pins: EmPins,
    max_iterations: usize,
) -> Result<EmFit> {
    if data.n_patterns() == 0 {
        return Err(Error::EmptyDataset);
    }
    let cc = ClassCounts::new(data);
    let (init_m, init_h, _) = data.dyad_fractions();
    let mut params = SiteParams {
        mu: pins.mu.unwrap_or(0.9),
        delta_p: pins.delta_p.unwrap_or(0.1),
        delta_d: pins.delta_d.unwrap_or(0.1),
        m: pins.m.unwrap_or((init_m + init_h / 2.0).clamp(0.05, 0.95)),
        b: if with_error { b_fixed } else { 0.0 },
        c: if with_error { pins.c.unwrap_or(0.02) } else { 0.0 },
    };
    let mut trace = Vec::new();
    let mut loglik = cc.loglik(&params, with_error);
    trace.push(loglik);
    let total_sites = (data.n_patterns() * data.n_sites()) as f64;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iterations {
        iterations += 1;
        // E-step: orientation weights per pattern, then per-class stats.
        let table = site_obs_table(&params, with_error);
        let lnt = [
            safe_ln(table[0][0]),
            safe_ln(table[0][1]),
            safe_ln(table[1][0]),
            safe_ln(table[1][1]),
        ];
        let stats = class_stats(&params, with_error);
        let mut agg = ClassStats::default();
        for row in &cc.counts {
            let lw0: f64 = (0..4).map(|cls| row[0][cls] * lnt[cls]).sum();
            let lw1: f64 = (0..4).map(|cls| row[1][cls] * lnt[cls]).sum();
            let norm = log_sum_exp(lw0, lw1);
            if norm == f64::NEG_INFINITY {
                continue;
            }
            for (o, lw) in [(0usize, lw0), (1usize, lw1)] {
                let w = exp(lw - norm);
                if w == 0.0 {
                    continue;
                }
                for cls in 0..4 {
                    let n = w * row[o][cls];
                    if n == 0.0 {
                        continue;
                    }
                    agg.p1 += n * stats[cls].p1;
                    agg.p1_d1 += n * stats[cls].p1_d1;
                    agg.p0_q1 += n * stats[cls].p0_q1;
                    agg.p0_d1 += n * stats[cls].p0_d1;
                    agg.truth1 += n * stats[cls].truth1;
                    agg.truth1_read0 += n * stats[cls].truth1_read0;
                }
            }
        }
        // M-step: closed-form ratios of expected counts.
        let p0 = total_sites - agg.p1;
        let update = |pin: Option<f64>, num: f64, den: f64, old: f64| -> f64 {
            match pin {
                Some(v) => v,
                None if den > 0.0 => (num / den).clamp(1e-12, 1.0 - 1e-12),
                None => old,
            }
        };
        params.mu = update(pins.mu, agg.p1_d1, agg.p1, params.mu);
        params.delta_p = update(pins.delta_p, agg.p0_q1, p0, params.delta_p);
        params.delta_d = update(pins.delta_d, agg.p0_d1, p0, params.delta_d);
        params.m = update(pins.m, agg.p1, total_sites, params.m);
        if with_error {
            params.c = update(pins.c, agg.truth1_read0, agg.truth1, params.c);
        }
        let next = cc.loglik(&params, with_error);
        trace.push(next);
        let gain = next - loglik;
        loglik = next;
        if gain.abs() < 1e-10 {
            converged = true;
            break;
        }
    }
    Ok(EmFit { params, loglik, trace, iterations, converged })
}

/// Configuration of the flat-prior shared-rate Metropolis fit.
#[derive(Debug, Clone)]
pub struct SharedMcmcConfig {
    pub n_iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub seed: u64,
    pub with_error: bool,
    pub b_fixed: f64,
    pub target_accept: f64,
}

impl Default for SharedMcmcConfig {
    fn default() -> Self {
        SharedMcmcConfig {
            n_iterations: 20_000,
            burn_in_fraction: 0.2,
            thin: 10,
            seed: 1,
            with_error: true,
            b_fixed: 0.003,
            target_accept: 0.44,
        }
    }
}

/// Draws from the shared-rate posterior under independent Uniform(0,1)
/// priors, via logit-scale random-walk Metropolis with burn-in adaptation.
/// Columns: `mu, dp, dd, m, c`.
#[derive(Debug, Clone)]
pub struct SharedFit {
    pub names: [&'static str; 5],
    pub draws: Vec<[f64; 5]>,
}

pub fn shared_rate_mcmc(data: &Dataset, cfg: &SharedMcmcConfig) -> Result<SharedFit> {
    let cc = ClassCounts::new(data);
    let mut rng = Rng::substream(cfg.seed, 0x5ad);
    let (init_m, init_h, _) = data.dyad_fractions();
    let mut params = SiteParams {
        mu: 0.9,
        delta_p: 0.1,
        delta_d: 0.1,
        m: (init_m + init_h / 2.0).clamp(0.05, 0.95),
        b: if cfg.with_error { cfg.b_fixed } else { 0.0 },
        c: if cfg.with_error { 0.02 } else { 0.0 },
    };
    let n_params = if cfg.with_error { 5 } else { 4 };
    let mut adapter = StepSizeAdapter::new(alloc::vec![0.4; n_params]);
    let mut loglik = cc.loglik(&params, cfg.with_error);
    if loglik == f64::NEG_INFINITY {
        return Err(Error::InvalidInit { reason: "shared-rate start has zero likelihood".into() });
    }
    let burn = (cfg.n_iterations as f64 * cfg.burn_in_fraction) as usize;
    let mut draws = Vec::new();
    for t in 0..cfg.n_iterations {
        for k in 0..n_params {
            let old = match k {
                0 => params.mu,
                1 => params.delta_p,
                2 => params.delta_d,
                3 => params.m,
                _ => params.c,
            };
            let new = sigmoid(logit(old) + adapter.scale(k) * rng.normal());
            if !(new > 0.0 && new < 1.0) {
                continue;
            }
            let mut cand = params;
            match k {
                0 => cand.mu = new,
                1 => cand.delta_p = new,
                2 => cand.delta_d = new,
                3 => cand.m = new,
                _ => cand.c = new,
            }
            let cand_ll = cc.loglik(&cand, cfg.with_error);
            let jac = ln(new) + ln_1p(-new) - ln(old) - ln_1p(-old);
            let log_alpha = cand_ll - loglik + jac;
            let accepted = log_alpha >= 0.0 || rng.uniform() < exp(log_alpha);
            if accepted {
                params = cand;
                loglik = cand_ll;
            }
            if t < burn {
                adapter.update(k, accepted, cfg.target_accept);
            }
        }
        if t >= burn && (t + 1 - burn) % cfg.thin == 0 {
            draws.push([params.mu, params.delta_p, params.delta_d, params.m, params.c]);
        }
    }
    Ok(SharedFit { names: ["mu", "dp", "dd", "m", "c"], draws })
}
