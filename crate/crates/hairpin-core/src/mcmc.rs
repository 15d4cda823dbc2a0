//! Metropolis-within-Gibbs sampler over site rates and hyperparameters.
//!
//! One sweep updates, in order: every site-level rate (logit-scale Gaussian
//! random walk, incremental likelihood), then every hyperparameter (mean `r`
//! on the logit scale, scaled variance `g` on the `log10` scale where its
//! prior is uniform, so no Jacobian term arises for `g`). Periodically the
//! sweep adds two joint reparameterization moves per family: a translation
//! that shifts all site logits together with the family mean, and a rescale
//! that contracts or dilates the site logits around the prior center together
//! with `g`. Both are deterministic involutions driven by a symmetric scalar
//! increment, so detailed balance holds per block; without them the sampler
//! mixes impractically slowly across the mean/variance funnel when the
//! likelihood is weak or absent.
//!
//! Proposal scales adapt per block during burn-in by a Robbins-Monro rule and
//! are frozen afterwards, leaving the post-burn-in chain time-homogeneous.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hierarchy::{self, log_prior, stationary_density, BetaRg};
use crate::likelihood::{dataset_loglik, Dataset, DatasetLikelihood};
use crate::math::{exp, ln, ln_1p, log10, logit, powf, sigmoid};
use crate::model::{BMode, HyperParams, SiteParams, SiteRates};
use crate::posterior::PosteriorSamples;
use crate::rng::Rng;
use crate::simulator::draw_site_rates;

/// Sweeps between the joint translation/rescale moves when a likelihood is
/// present; with a prior-only target they run every sweep.
const JOINT_MOVE_PERIOD: usize = 5;

/// Direction of the ridge move: conversion error and maintenance trade off
/// near `d(mu)/d(c) ~ 1` in densely methylated data (raising the assumed
/// error rate raises the maintenance rate needed to explain the same
/// patterns). Only proposal efficiency depends on this constant; Metropolis
/// acceptance corrects any mismatch.
const RIDGE_SLOPE: f64 = 1.04;

/// Tolerance on cached-versus-cold log density agreement.
pub const CACHE_TOL: f64 = 1e-9;

/// Chain run settings. Defaults follow the published fitting protocol:
/// 1.44 M iterations, 20% burn-in, retain every 2000th state, three chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub adapt_during_burnin: bool,
    pub with_error: bool,
    pub b_mode: BMode,
    pub target_accept: f64,
    /// Shuffle the site/hyper update order each sweep.
    pub randomized_scan: bool,
    /// Recheck cached log densities against cold recomputation every this
    /// many sweeps (0 disables).
    pub audit_every: usize,
    /// Drop the likelihood term entirely; the chain then samples the prior.
    pub prior_only: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iterations: 1_440_000,
            burn_in_fraction: 0.2,
            thin: 2000,
            seed: 1,
            n_chains: 3,
            adapt_during_burnin: true,
            with_error: true,
            b_mode: BMode::Fixed(0.003),
            target_accept: 0.44,
            randomized_scan: false,
            audit_every: 1000,
            prior_only: false,
        }
    }
}

impl ChainConfig {
    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidInit { reason: reason.into() });
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn_in_fraction must be in [0, 1)");
        }
        if self.thin == 0 {
            return bad("thin must be >= 1");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be >= 1");
        }
        if self.n_chains == 0 {
            return bad("n_chains must be >= 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must be in (0, 1)");
        }
        if let BMode::Fixed(v) = self.b_mode {
            if !(0.0..=1.0).contains(&v) {
                return bad("fixed b must be in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn burn_in_sweeps(&self) -> usize {
        (self.n_iterations as f64 * self.burn_in_fraction) as usize
    }
}

/// One complete sampler state with its cached log densities.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub rates: SiteRates,
    pub hp: HyperParams,
    pub cached_loglik: f64,
    pub cached_logprior: f64,
}

impl ModelState {
    pub fn log_posterior(&self) -> f64 {
        self.cached_loglik + self.cached_logprior
    }

    /// Recompute both densities cold and return the cached-minus-cold
    /// deviations `(loglik, logprior)`.
    pub fn audit(&self, data: Option<&Dataset>, with_error: bool) -> Result<(f64, f64)> {
        let cold_ll = match data {
            Some(d) => dataset_loglik(d, &self.rates, with_error)?,
            None => 0.0,
        };
        let cold_prior = log_prior(&self.rates, &self.hp, with_error);
        Ok((self.cached_loglik - cold_ll, self.cached_logprior - cold_prior))
    }
}

/// Starting point for a chain.
#[derive(Debug, Clone)]
pub enum Init {
    /// Hyperparameters at mid-support (`r = 0.5`, `log10 g = -2`, `r_c` at
    /// 0.03) and site rates drawn from that prior.
    Random,
    Explicit(Box<ModelState>),
}

/// Site-level rate families in sampler order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteFamily {
    Mu,
    DeltaP,
    DeltaD,
    M,
    C,
    B,
}

impl SiteFamily {
    const ALL: [SiteFamily; 6] =
        [SiteFamily::Mu, SiteFamily::DeltaP, SiteFamily::DeltaD, SiteFamily::M, SiteFamily::C, SiteFamily::B];

    fn index(self) -> usize {
        match self {
            SiteFamily::Mu => 0,
            SiteFamily::DeltaP => 1,
            SiteFamily::DeltaD => 2,
            SiteFamily::M => 3,
            SiteFamily::C => 4,
            SiteFamily::B => 5,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SiteFamily::Mu => "mu",
            SiteFamily::DeltaP => "dp",
            SiteFamily::DeltaD => "dd",
            SiteFamily::M => "m",
            SiteFamily::C => "c",
            SiteFamily::B => "b",
        }
    }
}

/// Hyperparameter blocks in sampler order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyper {
    RMu,
    GMu,
    RDp,
    GDp,
    RDd,
    GDd,
    RB,
    GB,
    RC,
    GC,
    GM,
}

impl Hyper {
    const ALL: [Hyper; 11] = [
        Hyper::RMu,
        Hyper::GMu,
        Hyper::RDp,
        Hyper::GDp,
        Hyper::RDd,
        Hyper::GDd,
        Hyper::RB,
        Hyper::GB,
        Hyper::RC,
        Hyper::GC,
        Hyper::GM,
    ];

    fn index(self) -> usize {
        Hyper::ALL.iter().position(|h| *h == self).unwrap()
    }

    fn name(self) -> &'static str {
        match self {
            Hyper::RMu => "r_mu",
            Hyper::GMu => "g_mu",
            Hyper::RDp => "r_dp",
            Hyper::GDp => "g_dp",
            Hyper::RDd => "r_dd",
            Hyper::GDd => "g_dd",
            Hyper::RB => "r_b",
            Hyper::GB => "g_b",
            Hyper::RC => "r_c",
            Hyper::GC => "g_c",
            Hyper::GM => "g_m",
        }
    }
}

/// A single Metropolis block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Site { family: SiteFamily, site: usize },
    Hyper(Hyper),
    Translate(SiteFamily),
    Rescale(SiteFamily),
    /// Joint walk of the c and mu families (sites and means) along the
    /// error/maintenance trade-off direction.
    Ridge,
}

/// Per-block Robbins-Monro step-size adaptation toward a target acceptance
/// rate.
#[derive(Debug, Clone)]
pub struct StepSizeAdapter {
    scales: Vec<f64>,
    counts: Vec<u64>,
}

impl StepSizeAdapter {
    pub fn new(scales: Vec<f64>) -> Self {
        let counts = vec![0; scales.len()];
        StepSizeAdapter { scales, counts }
    }

    pub fn scale(&self, idx: usize) -> f64 {
        self.scales[idx]
    }

    /// Nudge the block's scale up on acceptance and down on rejection, with a
    /// decaying gain so the scales settle.
    pub fn update(&mut self, idx: usize, accepted: bool, target_accept: f64) {
        self.counts[idx] += 1;
        let gain = 1.0 / powf(self.counts[idx] as f64, 0.7);
        let a = if accepted { 1.0 } else { 0.0 };
        self.scales[idx] *= exp(gain * (a - target_accept));
        self.scales[idx] = self.scales[idx].clamp(1e-4, 1e4);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockStat {
    proposals_burnin: u64,
    accepts_burnin: u64,
    proposals: u64,
    accepts: u64,
}

/// Pooled acceptance counts for one kind of block (site families pool their
/// S per-site blocks).
#[derive(Debug, Clone)]
pub struct BlockAcceptance {
    pub name: String,
    pub proposals_burnin: u64,
    pub accepts_burnin: u64,
    pub proposals: u64,
    pub accepts: u64,
}

impl BlockAcceptance {
    /// Post-burn-in acceptance rate.
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }
}

/// Output of one chain: thinned draws plus acceptance bookkeeping.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub chain_id: u32,
    pub samples: PosteriorSamples,
    pub acceptance: Vec<BlockAcceptance>,
}

/// Column labels of the sample matrix for `n_sites` sites.
pub fn parameter_names(n_sites: usize, b_hierarchical: bool) -> Vec<String> {
    let mut names = Vec::new();
    let mut fams = vec!["mu", "dp", "dd", "m", "c"];
    if b_hierarchical {
        fams.push("b");
    }
    for fam in fams {
        for j in 1..=n_sites {
            names.push(format!("{fam}.{j}"));
        }
    }
    for h in Hyper::ALL {
        names.push(h.name().to_string());
    }
    names.push("logpost".to_string());
    names
}

/// One MCMC chain: state, likelihood cache, proposal scales, and statistics.
/// Strictly sequential; concurrent chains each own one of these.
pub struct Chain<'a> {
    data: Option<&'a Dataset>,
    cfg: ChainConfig,
    n_sites: usize,
    burn_in: usize,
    state: ModelState,
    like: Option<DatasetLikelihood>,
    adapter: StepSizeAdapter,
    stats: Vec<BlockStat>,
    rng: Rng,
    sweep_count: usize,
}

impl<'a> Chain<'a> {
    /// Build a chain over `data` (or a prior-only chain when `data` is
    /// `None`). `chain_id` selects the RNG substream.
    pub fn new(
        data: Option<&'a Dataset>,
        n_sites: usize,
        cfg: &ChainConfig,
        init: Init,
        chain_id: u32,
    ) -> Result<Self> {
        cfg.validate()?;
        if let Some(d) = data {
            if d.n_sites() != n_sites {
                return Err(Error::DimensionMismatch { expected: n_sites, found: d.n_sites() });
            }
        }
        let mut rng = Rng::substream(cfg.seed, chain_id as u64);
        let (rates, hp) = match init {
            Init::Explicit(state) => {
                let state = *state;
                validate_explicit(&state, n_sites, cfg)?;
                (state.rates, state.hp)
            }
            Init::Random => random_init(cfg, n_sites, data, &mut rng)?,
        };
        let use_error = cfg.with_error && !cfg.prior_only;
        let like = match (data, cfg.prior_only) {
            (Some(d), false) => Some(DatasetLikelihood::new(d, &rates, use_error)?),
            _ => None,
        };
        let cached_loglik = like.as_ref().map(|l| l.total()).unwrap_or(0.0);
        let cached_logprior = log_prior(&rates, &hp, cfg.with_error);
        if cached_logprior == f64::NEG_INFINITY {
            return Err(Error::InvalidInit { reason: "initial state outside prior support".into() });
        }
        let state = ModelState { rates, hp, cached_loglik, cached_logprior };
        let n_blocks = 6 * n_sites + 11 + 12 + 1;
        let mut scales = vec![0.5; n_blocks];
        for h in Hyper::ALL {
            scales[6 * n_sites + h.index()] = 0.3;
        }
        for f in SiteFamily::ALL {
            scales[6 * n_sites + 11 + f.index()] = 0.2; // translations
            scales[6 * n_sites + 17 + f.index()] = 0.3; // rescales
        }
        scales[6 * n_sites + 23] = 0.005; // ridge walk, natural units of c
        let burn_in = cfg.burn_in_sweeps();
        Ok(Chain {
            data,
            cfg: cfg.clone(),
            n_sites,
            burn_in,
            state,
            like,
            adapter: StepSizeAdapter::new(scales),
            stats: vec![BlockStat::default(); n_blocks],
            rng,
            sweep_count: 0,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep_count
    }

    fn in_burnin(&self) -> bool {
        self.sweep_count < self.burn_in
    }

    fn block_index(&self, block: Block) -> usize {
        match block {
            Block::Site { family, site } => family.index() * self.n_sites + site,
            Block::Hyper(h) => 6 * self.n_sites + h.index(),
            Block::Translate(f) => 6 * self.n_sites + 11 + f.index(),
            Block::Rescale(f) => 6 * self.n_sites + 17 + f.index(),
            Block::Ridge => 6 * self.n_sites + 23,
        }
    }

    fn b_hierarchical(&self) -> bool {
        self.state.hp.b_mode == BMode::Hierarchical
    }

    /// Whether the conversion-error families are part of the sampled state.
    fn error_active(&self) -> bool {
        self.cfg.with_error
    }

    fn scheduled_blocks(&self) -> Vec<Block> {
        let mut blocks = Vec::with_capacity(6 * self.n_sites + 11);
        for site in 0..self.n_sites {
            for family in [SiteFamily::Mu, SiteFamily::DeltaP, SiteFamily::DeltaD, SiteFamily::M] {
                blocks.push(Block::Site { family, site });
            }
            if self.error_active() {
                blocks.push(Block::Site { family: SiteFamily::C, site });
                if self.b_hierarchical() {
                    blocks.push(Block::Site { family: SiteFamily::B, site });
                }
            }
        }
        for h in [Hyper::RMu, Hyper::GMu, Hyper::RDp, Hyper::GDp, Hyper::RDd, Hyper::GDd] {
            blocks.push(Block::Hyper(h));
        }
        if self.error_active() {
            if self.b_hierarchical() {
                blocks.push(Block::Hyper(Hyper::RB));
                blocks.push(Block::Hyper(Hyper::GB));
            }
            blocks.push(Block::Hyper(Hyper::RC));
            blocks.push(Block::Hyper(Hyper::GC));
        }
        blocks.push(Block::Hyper(Hyper::GM));
        blocks
    }

    fn joint_blocks(&self) -> Vec<Block> {
        let mut fams = vec![SiteFamily::Mu, SiteFamily::DeltaP, SiteFamily::DeltaD];
        if self.error_active() {
            fams.push(SiteFamily::C);
            if self.b_hierarchical() {
                fams.push(SiteFamily::B);
            }
        }
        let mut blocks = Vec::with_capacity(2 * fams.len() + 2);
        for f in fams {
            blocks.push(Block::Translate(f));
            blocks.push(Block::Rescale(f));
        }
        blocks.push(Block::Rescale(SiteFamily::M));
        if self.error_active() {
            blocks.push(Block::Ridge);
        }
        blocks
    }

    /// One full update cycle over all blocks.
    pub fn sweep(&mut self) {
        let mut blocks = self.scheduled_blocks();
        if self.cfg.randomized_scan {
            for i in (1..blocks.len()).rev() {
                blocks.swap(i, self.rng.index(i + 1));
            }
        }
        for block in blocks {
            self.step_block(block);
        }
        let joint_due = self.cfg.prior_only || self.sweep_count % JOINT_MOVE_PERIOD == 0;
        if joint_due {
            for block in self.joint_blocks() {
                self.step_block(block);
            }
        }
        self.sweep_count += 1;
    }

    fn step_block(&mut self, block: Block) {
        let accepted = match block {
            Block::Site { family, site } => self.step_site(family, site),
            Block::Hyper(h) => self.step_hyper(h),
            Block::Translate(f) => self.step_translate(f),
            Block::Rescale(f) => self.step_rescale(f),
            Block::Ridge => self.step_ridge(),
        };
        let idx = self.block_index(block);
        let stat = &mut self.stats[idx];
        if self.sweep_count < self.burn_in {
            stat.proposals_burnin += 1;
            stat.accepts_burnin += if accepted { 1 } else { 0 };
        } else {
            stat.proposals += 1;
            stat.accepts += if accepted { 1 } else { 0 };
        }
        if self.in_burnin() && self.cfg.adapt_during_burnin {
            self.adapter.update(idx, accepted, self.cfg.target_accept);
        }
    }

    fn accept(&mut self, log_alpha: f64) -> bool {
        if log_alpha >= 0.0 {
            true
        } else if log_alpha == f64::NEG_INFINITY {
            false
        } else {
            self.rng.uniform() < exp(log_alpha)
        }
    }

    fn site_value(&self, family: SiteFamily, site: usize) -> f64 {
        let r = &self.state.rates;
        match family {
            SiteFamily::Mu => r.mu[site],
            SiteFamily::DeltaP => r.delta_p[site],
            SiteFamily::DeltaD => r.delta_d[site],
            SiteFamily::M => r.m[site],
            SiteFamily::C => r.c[site],
            SiteFamily::B => r.b[site],
        }
    }

    fn set_site_value(rates: &mut SiteRates, family: SiteFamily, site: usize, v: f64) {
        match family {
            SiteFamily::Mu => rates.mu[site] = v,
            SiteFamily::DeltaP => rates.delta_p[site] = v,
            SiteFamily::DeltaD => rates.delta_d[site] = v,
            SiteFamily::M => rates.m[site] = v,
            SiteFamily::C => rates.c[site] = v,
            SiteFamily::B => rates.b[site] = v,
        }
    }

    /// Likelihood and prior deltas for moving one site rate to `v_new`.
    /// Stages the likelihood move; the caller commits or clears it.
    fn site_delta(&mut self, family: SiteFamily, site: usize, v_new: f64) -> (f64, f64) {
        let old = self.state.rates.site(site);
        let mut new = old;
        match family {
            SiteFamily::Mu => new.mu = v_new,
            SiteFamily::DeltaP => new.delta_p = v_new,
            SiteFamily::DeltaD => new.delta_d = v_new,
            SiteFamily::M => new.m = v_new,
            SiteFamily::C => new.c = v_new,
            SiteFamily::B => new.b = v_new,
        }
        let ll_delta = match self.like.as_mut() {
            Some(like) => like.propose_site(site, &new),
            None => 0.0,
        };
        let prior_delta = self.site_prior_delta(family, &old, &new);
        (ll_delta, prior_delta)
    }

    fn site_prior_delta(&self, family: SiteFamily, old: &SiteParams, new: &SiteParams) -> f64 {
        let hp = &self.state.hp;
        let m_term = |p: &SiteParams| -> f64 {
            let center = match stationary_density(p.mu, p.delta_p, p.delta_d) {
                Ok(c) if c > 0.0 && c < 1.0 => c,
                _ => return f64::NEG_INFINITY,
            };
            BetaRg { r: center, g: hp.g_m }.log_pdf(p.m)
        };
        match family {
            SiteFamily::Mu => hp.mu.log_pdf(new.mu) - hp.mu.log_pdf(old.mu) + m_term(new) - m_term(old),
            SiteFamily::DeltaP => {
                hp.delta_p.log_pdf(new.delta_p) - hp.delta_p.log_pdf(old.delta_p) + m_term(new) - m_term(old)
            }
            SiteFamily::DeltaD => {
                hp.delta_d.log_pdf(new.delta_d) - hp.delta_d.log_pdf(old.delta_d) + m_term(new) - m_term(old)
            }
            SiteFamily::M => m_term(new) - m_term(old),
            SiteFamily::C => hp.c.log_pdf(new.c) - hp.c.log_pdf(old.c),
            SiteFamily::B => hp.b.log_pdf(new.b) - hp.b.log_pdf(old.b),
        }
    }

    fn step_site(&mut self, family: SiteFamily, site: usize) -> bool {
        let idx = self.block_index(Block::Site { family, site });
        let sigma = self.adapter.scale(idx);
        let v_old = self.site_value(family, site);
        let v_new = sigmoid(logit(v_old) + sigma * self.rng.normal());
        if !(v_new > 0.0 && v_new < 1.0) {
            self.like.as_mut().map(DatasetLikelihood::clear_pending);
            return false;
        }
        let (ll_delta, prior_delta) = self.site_delta(family, site, v_new);
        let jac = ln(v_new) + ln_1p(-v_new) - ln(v_old) - ln_1p(-v_old);
        let accepted = self.accept(ll_delta + prior_delta + jac);
        if accepted {
            Self::set_site_value(&mut self.state.rates, family, site, v_new);
            if let Some(like) = self.like.as_mut() {
                like.commit_pending();
            }
            self.state.cached_loglik += ll_delta;
            self.state.cached_logprior += prior_delta;
        } else if let Some(like) = self.like.as_mut() {
            like.clear_pending();
        }
        accepted
    }

    fn family_values(&self, family: SiteFamily) -> &[f64] {
        let r = &self.state.rates;
        match family {
            SiteFamily::Mu => &r.mu,
            SiteFamily::DeltaP => &r.delta_p,
            SiteFamily::DeltaD => &r.delta_d,
            SiteFamily::M => &r.m,
            SiteFamily::C => &r.c,
            SiteFamily::B => &r.b,
        }
    }

    /// Sum of the family's beta prior terms at the given hyperparameters.
    fn family_prior_sum(&self, family: SiteFamily, rg: &BetaRg) -> f64 {
        self.family_values(family).iter().map(|&v| rg.log_pdf(v)).sum()
    }

    /// Sum of the m prior terms at spread `g_m`.
    fn m_prior_sum(&self, g_m: f64) -> f64 {
        let rates = &self.state.rates;
        (0..self.n_sites)
            .map(|j| {
                let center = match stationary_density(rates.mu[j], rates.delta_p[j], rates.delta_d[j]) {
                    Ok(c) if c > 0.0 && c < 1.0 => c,
                    _ => return f64::NEG_INFINITY,
                };
                BetaRg { r: center, g: g_m }.log_pdf(rates.m[j])
            })
            .sum()
    }

    fn step_hyper(&mut self, hyper: Hyper) -> bool {
        let idx = self.block_index(Block::Hyper(hyper));
        let sigma = self.adapter.scale(idx);
        let noise = sigma * self.rng.normal();
        let hp = self.state.hp.clone();
        // (prior_delta, jacobian_delta, updated hyperparams)
        let (prior_delta, jac_delta, new_hp) = match hyper {
            Hyper::RMu | Hyper::RDp | Hyper::RDd | Hyper::RB => {
                let (family, rg) = match hyper {
                    Hyper::RMu => (SiteFamily::Mu, &hp.mu),
                    Hyper::RDp => (SiteFamily::DeltaP, &hp.delta_p),
                    Hyper::RDd => (SiteFamily::DeltaD, &hp.delta_d),
                    _ => (SiteFamily::B, &hp.b),
                };
                let r_new = sigmoid(logit(rg.r) + noise);
                if !(r_new > 0.0 && r_new < 1.0) {
                    return false;
                }
                let cand = BetaRg { r: r_new, g: rg.g };
                let delta = self.family_prior_sum(family, &cand) - self.family_prior_sum(family, rg);
                let jac = ln(r_new) + ln_1p(-r_new) - ln(rg.r) - ln_1p(-rg.r);
                let mut new_hp = hp.clone();
                match hyper {
                    Hyper::RMu => new_hp.mu = cand,
                    Hyper::RDp => new_hp.delta_p = cand,
                    Hyper::RDd => new_hp.delta_d = cand,
                    _ => new_hp.b = cand,
                }
                (delta, jac, new_hp)
            }
            Hyper::RC => {
                // r_c lives in (0, R_C_MAX); the walk runs on the logit of
                // the rescaled coordinate.
                let cap = hierarchy::R_C_MAX;
                let r_new = cap * sigmoid(logit(hp.c.r / cap) + noise);
                if !(r_new > 0.0 && r_new < cap) {
                    return false;
                }
                let cand = BetaRg { r: r_new, g: hp.c.g };
                let delta = self.family_prior_sum(SiteFamily::C, &cand) - self.family_prior_sum(SiteFamily::C, &hp.c);
                let jac = ln(r_new) + ln_1p(-r_new / cap) - ln(hp.c.r) - ln_1p(-hp.c.r / cap);
                let mut new_hp = hp.clone();
                new_hp.c = cand;
                (delta, jac, new_hp)
            }
            Hyper::GMu | Hyper::GDp | Hyper::GDd | Hyper::GB | Hyper::GC => {
                let (family, rg) = match hyper {
                    Hyper::GMu => (SiteFamily::Mu, &hp.mu),
                    Hyper::GDp => (SiteFamily::DeltaP, &hp.delta_p),
                    Hyper::GDd => (SiteFamily::DeltaD, &hp.delta_d),
                    Hyper::GB => (SiteFamily::B, &hp.b),
                    _ => (SiteFamily::C, &hp.c),
                };
                let u_new = log10(rg.g) + noise;
                if u_new <= hierarchy::LOG10_G_MIN || u_new >= hierarchy::LOG10_G_MAX {
                    return false;
                }
                let cand = BetaRg { r: rg.r, g: powf(10.0, u_new) };
                let delta = self.family_prior_sum(family, &cand) - self.family_prior_sum(family, rg);
                let mut new_hp = hp.clone();
                match hyper {
                    Hyper::GMu => new_hp.mu = cand,
                    Hyper::GDp => new_hp.delta_p = cand,
                    Hyper::GDd => new_hp.delta_d = cand,
                    Hyper::GB => new_hp.b = cand,
                    _ => new_hp.c = cand,
                }
                (delta, 0.0, new_hp)
            }
            Hyper::GM => {
                let u_new = log10(hp.g_m) + noise;
                if u_new <= hierarchy::LOG10_G_MIN || u_new >= hierarchy::LOG10_G_MAX {
                    return false;
                }
                let g_new = powf(10.0, u_new);
                let delta = self.m_prior_sum(g_new) - self.m_prior_sum(hp.g_m);
                let mut new_hp = hp.clone();
                new_hp.g_m = g_new;
                (delta, 0.0, new_hp)
            }
        };
        let accepted = self.accept(prior_delta + jac_delta);
        if accepted {
            self.state.hp = new_hp;
            self.state.cached_logprior += prior_delta;
        }
        accepted
    }

    /// Shift every `m_j` in logit space by the change its stationarity
    /// center underwent between `old` and `cand`, returning the Jacobian
    /// contribution. Keeps `m` riding along when the families that define
    /// its prior center move; the shift does not depend on `m_j` itself, so
    /// the coupled map stays an involution with a diagonal Jacobian.
    fn carry_m_with_centers(old: &SiteRates, cand: &mut SiteRates) -> Option<f64> {
        let mut jac = 0.0;
        for j in 0..old.n_sites() {
            let before = match stationary_density(old.mu[j], old.delta_p[j], old.delta_d[j]) {
                Ok(c) if c > 0.0 && c < 1.0 => c,
                _ => return None,
            };
            let after = match stationary_density(cand.mu[j], cand.delta_p[j], cand.delta_d[j]) {
                Ok(c) if c > 0.0 && c < 1.0 => c,
                _ => return None,
            };
            let m_new = sigmoid(logit(cand.m[j]) + logit(after) - logit(before));
            if !(m_new > 0.0 && m_new < 1.0) {
                return None;
            }
            jac += ln(m_new) + ln_1p(-m_new) - ln(cand.m[j]) - ln_1p(-cand.m[j]);
            cand.m[j] = m_new;
        }
        Some(jac)
    }

    /// Translate all site logits of a family together with its mean
    /// hyperparameter.
    fn step_translate(&mut self, family: SiteFamily) -> bool {
        let idx = self.block_index(Block::Translate(family));
        let eps = self.adapter.scale(idx) * self.rng.normal();
        let mut cand_rates = self.state.rates.clone();
        let values = match family {
            SiteFamily::Mu => &mut cand_rates.mu,
            SiteFamily::DeltaP => &mut cand_rates.delta_p,
            SiteFamily::DeltaD => &mut cand_rates.delta_d,
            SiteFamily::M => &mut cand_rates.m,
            SiteFamily::C => &mut cand_rates.c,
            SiteFamily::B => &mut cand_rates.b,
        };
        let mut jac = 0.0;
        for v in values.iter_mut() {
            let v_new = sigmoid(logit(*v) + eps);
            if !(v_new > 0.0 && v_new < 1.0) {
                return false;
            }
            jac += ln(v_new) + ln_1p(-v_new) - ln(*v) - ln_1p(-*v);
            *v = v_new;
        }
        if matches!(family, SiteFamily::Mu | SiteFamily::DeltaP | SiteFamily::DeltaD) {
            match Self::carry_m_with_centers(&self.state.rates, &mut cand_rates) {
                Some(j) => jac += j,
                None => return false,
            }
        }
        let mut cand_hp = self.state.hp.clone();
        match family {
            SiteFamily::Mu | SiteFamily::DeltaP | SiteFamily::DeltaD | SiteFamily::B => {
                let rg = match family {
                    SiteFamily::Mu => &mut cand_hp.mu,
                    SiteFamily::DeltaP => &mut cand_hp.delta_p,
                    SiteFamily::DeltaD => &mut cand_hp.delta_d,
                    _ => &mut cand_hp.b,
                };
                let r_new = sigmoid(logit(rg.r) + eps);
                if !(r_new > 0.0 && r_new < 1.0) {
                    return false;
                }
                jac += ln(r_new) + ln_1p(-r_new) - ln(rg.r) - ln_1p(-rg.r);
                rg.r = r_new;
            }
            SiteFamily::C => {
                let cap = hierarchy::R_C_MAX;
                let r_new = cap * sigmoid(logit(cand_hp.c.r / cap) + eps);
                if !(r_new > 0.0 && r_new < cap) {
                    return false;
                }
                jac += ln(r_new) + ln_1p(-r_new / cap) - ln(cand_hp.c.r) - ln_1p(-cand_hp.c.r / cap);
                cand_hp.c.r = r_new;
            }
            SiteFamily::M => {} // the m centers are tied to other families
        }
        self.try_joint_move(cand_rates, cand_hp, jac)
    }

    /// Contract or dilate a family's site logits around the prior center,
    /// jointly with its scaled variance. The log-Jacobian of rescaling S
    /// coordinates by `s` is `S ln s`.
    fn step_rescale(&mut self, family: SiteFamily) -> bool {
        let idx = self.block_index(Block::Rescale(family));
        let dlt = self.adapter.scale(idx) * self.rng.normal();
        let hp = &self.state.hp;
        let g_old = match family {
            SiteFamily::Mu => hp.mu.g,
            SiteFamily::DeltaP => hp.delta_p.g,
            SiteFamily::DeltaD => hp.delta_d.g,
            SiteFamily::C => hp.c.g,
            SiteFamily::B => hp.b.g,
            SiteFamily::M => hp.g_m,
        };
        let u_new = log10(g_old) + dlt;
        if u_new <= hierarchy::LOG10_G_MIN || u_new >= hierarchy::LOG10_G_MAX {
            return false;
        }
        let g_new = powf(10.0, u_new);
        let scale = powf(10.0, dlt / 2.0);
        let rates = &self.state.rates;
        let centers: Vec<f64> = match family {
            SiteFamily::Mu => vec![logit(hp.mu.r); self.n_sites],
            SiteFamily::DeltaP => vec![logit(hp.delta_p.r); self.n_sites],
            SiteFamily::DeltaD => vec![logit(hp.delta_d.r); self.n_sites],
            SiteFamily::C => vec![logit(hp.c.r); self.n_sites],
            SiteFamily::B => vec![logit(hp.b.r); self.n_sites],
            SiteFamily::M => {
                let mut cs = Vec::with_capacity(self.n_sites);
                for j in 0..self.n_sites {
                    match stationary_density(rates.mu[j], rates.delta_p[j], rates.delta_d[j]) {
                        Ok(c) if c > 0.0 && c < 1.0 => cs.push(logit(c)),
                        _ => return false,
                    }
                }
                cs
            }
        };
        let mut cand_rates = self.state.rates.clone();
        let values = match family {
            SiteFamily::Mu => &mut cand_rates.mu,
            SiteFamily::DeltaP => &mut cand_rates.delta_p,
            SiteFamily::DeltaD => &mut cand_rates.delta_d,
            SiteFamily::M => &mut cand_rates.m,
            SiteFamily::C => &mut cand_rates.c,
            SiteFamily::B => &mut cand_rates.b,
        };
        let mut jac = self.n_sites as f64 * ln(scale);
        for (v, center) in values.iter_mut().zip(&centers) {
            let z_new = center + scale * (logit(*v) - center);
            let v_new = sigmoid(z_new);
            if !(v_new > 0.0 && v_new < 1.0) {
                return false;
            }
            jac += ln(v_new) + ln_1p(-v_new) - ln(*v) - ln_1p(-*v);
            *v = v_new;
        }
        if matches!(family, SiteFamily::Mu | SiteFamily::DeltaP | SiteFamily::DeltaD) {
            match Self::carry_m_with_centers(&self.state.rates, &mut cand_rates) {
                Some(j) => jac += j,
                None => return false,
            }
        }
        let mut cand_hp = self.state.hp.clone();
        match family {
            SiteFamily::Mu => cand_hp.mu.g = g_new,
            SiteFamily::DeltaP => cand_hp.delta_p.g = g_new,
            SiteFamily::DeltaD => cand_hp.delta_d.g = g_new,
            SiteFamily::C => cand_hp.c.g = g_new,
            SiteFamily::B => cand_hp.b.g = g_new,
            SiteFamily::M => cand_hp.g_m = g_new,
        }
        self.try_joint_move(cand_rates, cand_hp, jac)
    }

    /// Walk the c and mu families jointly along the error/maintenance ridge:
    /// all `c_j` and `r_c` shift by `eps` in natural units while all `mu_j`
    /// and `r_mu` shift by `RIDGE_SLOPE * eps`, with `m` carried along the
    /// induced stationarity-center change. A pure translation in natural
    /// coordinates, so only the `m` carry contributes a Jacobian. Without
    /// this move, chains diffuse impractically slowly along the
    /// near-unidentifiable ridge the error layer creates.
    fn step_ridge(&mut self) -> bool {
        let idx = self.block_index(Block::Ridge);
        let eps = self.adapter.scale(idx) * self.rng.normal();
        let mut cand_rates = self.state.rates.clone();
        for c in cand_rates.c.iter_mut() {
            *c += eps;
            if !(*c > 0.0 && *c < 1.0) {
                return false;
            }
        }
        for mu in cand_rates.mu.iter_mut() {
            *mu += RIDGE_SLOPE * eps;
            if !(*mu > 0.0 && *mu < 1.0) {
                return false;
            }
        }
        let mut cand_hp = self.state.hp.clone();
        cand_hp.c.r += eps;
        if !(cand_hp.c.r > 0.0 && cand_hp.c.r < hierarchy::R_C_MAX) {
            return false;
        }
        cand_hp.mu.r += RIDGE_SLOPE * eps;
        if !(cand_hp.mu.r > 0.0 && cand_hp.mu.r < 1.0) {
            return false;
        }
        let jac = match Self::carry_m_with_centers(&self.state.rates, &mut cand_rates) {
            Some(j) => j,
            None => return false,
        };
        self.try_joint_move(cand_rates, cand_hp, jac)
    }

    /// Shared acceptance path for whole-family proposals: evaluates the
    /// candidate cold and rebuilds the likelihood cache on acceptance.
    fn try_joint_move(&mut self, cand_rates: SiteRates, cand_hp: HyperParams, jac: f64) -> bool {
        let prior_new = log_prior(&cand_rates, &cand_hp, self.cfg.with_error);
        if prior_new == f64::NEG_INFINITY {
            return false;
        }
        let ll_new = match self.like.as_ref() {
            Some(like) => like.total_for(&cand_rates),
            None => 0.0,
        };
        let log_alpha =
            (ll_new - self.state.cached_loglik) + (prior_new - self.state.cached_logprior) + jac;
        let accepted = self.accept(log_alpha);
        if accepted {
            self.state.rates = cand_rates;
            self.state.hp = cand_hp;
            if let Some(like) = self.like.as_mut() {
                like.rebuild(&self.state.rates);
                self.state.cached_loglik = like.total();
            }
            self.state.cached_logprior = prior_new;
        }
        accepted
    }

    /// Compare cached log densities against cold recomputation, then refresh
    /// the caches. Errors when drift exceeds [`CACHE_TOL`].
    pub fn audit_and_refresh(&mut self) -> Result<()> {
        let data = if self.cfg.prior_only { None } else { self.data };
        let (dev_ll, dev_prior) = self.state.audit(data, self.cfg.with_error)?;
        if dev_ll.abs() > CACHE_TOL {
            return Err(Error::InvalidInit {
                reason: format!("likelihood cache drift {dev_ll:e} exceeds {CACHE_TOL:e}"),
            });
        }
        if dev_prior.abs() > CACHE_TOL {
            return Err(Error::InvalidInit {
                reason: format!("prior cache drift {dev_prior:e} exceeds {CACHE_TOL:e}"),
            });
        }
        if let Some(like) = self.like.as_mut() {
            like.rebuild(&self.state.rates);
            self.state.cached_loglik = like.total();
        }
        self.state.cached_logprior = log_prior(&self.state.rates, &self.state.hp, self.cfg.with_error);
        Ok(())
    }

    /// Current draw as a sample-matrix row.
    pub fn row(&self) -> Vec<f64> {
        let r = &self.state.rates;
        let mut row = Vec::with_capacity(6 * self.n_sites + 12);
        row.extend_from_slice(&r.mu);
        row.extend_from_slice(&r.delta_p);
        row.extend_from_slice(&r.delta_d);
        row.extend_from_slice(&r.m);
        row.extend_from_slice(&r.c);
        if self.b_hierarchical() {
            row.extend_from_slice(&r.b);
        }
        let hp = &self.state.hp;
        row.extend_from_slice(&[
            hp.mu.r,
            hp.mu.g,
            hp.delta_p.r,
            hp.delta_p.g,
            hp.delta_d.r,
            hp.delta_d.g,
            hp.b.r,
            hp.b.g,
            hp.c.r,
            hp.c.g,
            hp.g_m,
        ]);
        row.push(self.state.log_posterior());
        row
    }

    /// Pooled acceptance statistics: one entry per site family and one per
    /// hyperparameter and joint move, skipping blocks that never ran.
    pub fn acceptance(&self) -> Vec<BlockAcceptance> {
        let mut out = Vec::new();
        for f in SiteFamily::ALL {
            let mut acc = BlockAcceptance {
                name: format!("site_{}", f.name()),
                proposals_burnin: 0,
                accepts_burnin: 0,
                proposals: 0,
                accepts: 0,
            };
            for site in 0..self.n_sites {
                let s = &self.stats[self.block_index(Block::Site { family: f, site })];
                acc.proposals_burnin += s.proposals_burnin;
                acc.accepts_burnin += s.accepts_burnin;
                acc.proposals += s.proposals;
                acc.accepts += s.accepts;
            }
            if acc.proposals + acc.proposals_burnin > 0 {
                out.push(acc);
            }
        }
        for h in Hyper::ALL {
            let s = &self.stats[self.block_index(Block::Hyper(h))];
            if s.proposals + s.proposals_burnin > 0 {
                out.push(BlockAcceptance {
                    name: h.name().to_string(),
                    proposals_burnin: s.proposals_burnin,
                    accepts_burnin: s.accepts_burnin,
                    proposals: s.proposals,
                    accepts: s.accepts,
                });
            }
        }
        for (label, offset) in [("translate", 11usize), ("rescale", 17usize)] {
            for f in SiteFamily::ALL {
                let s = &self.stats[6 * self.n_sites + offset + f.index()];
                if s.proposals + s.proposals_burnin > 0 {
                    out.push(BlockAcceptance {
                        name: format!("{label}_{}", f.name()),
                        proposals_burnin: s.proposals_burnin,
                        accepts_burnin: s.accepts_burnin,
                        proposals: s.proposals,
                        accepts: s.accepts,
                    });
                }
            }
        }
        let s = &self.stats[6 * self.n_sites + 23];
        if s.proposals + s.proposals_burnin > 0 {
            out.push(BlockAcceptance {
                name: "ridge".to_string(),
                proposals_burnin: s.proposals_burnin,
                accepts_burnin: s.accepts_burnin,
                proposals: s.proposals,
                accepts: s.accepts,
            });
        }
        out
    }
}

fn validate_explicit(state: &ModelState, n_sites: usize, cfg: &ChainConfig) -> Result<()> {
    state.rates.validate()?;
    if state.rates.n_sites() != n_sites {
        return Err(Error::DimensionMismatch { expected: n_sites, found: state.rates.n_sites() });
    }
    if state.hp.b_mode != cfg.b_mode {
        return Err(Error::InvalidInit { reason: "b_mode of init disagrees with config".into() });
    }
    if let BMode::Fixed(v) = cfg.b_mode {
        if cfg.with_error && state.rates.b.iter().any(|&b| b != v) {
            return Err(Error::InvalidInit { reason: format!("b must be fixed at {v}") });
        }
    }
    if !cfg.with_error && state.rates.c.iter().chain(&state.rates.b).any(|&x| x != 0.0) {
        return Err(Error::InvalidInit { reason: "no-error fit requires b = c = 0".into() });
    }
    if log_prior(&state.rates, &state.hp, cfg.with_error) == f64::NEG_INFINITY {
        return Err(Error::InvalidInit { reason: "state outside prior support".into() });
    }
    Ok(())
}

fn random_init(
    cfg: &ChainConfig,
    n_sites: usize,
    data: Option<&Dataset>,
    rng: &mut Rng,
) -> Result<(SiteRates, HyperParams)> {
    let hp = HyperParams {
        mu: BetaRg { r: 0.5, g: 0.01 },
        delta_p: BetaRg { r: 0.5, g: 0.01 },
        delta_d: BetaRg { r: 0.5, g: 0.01 },
        b: BetaRg { r: 0.5, g: 0.01 },
        c: BetaRg { r: 0.03, g: 0.01 },
        g_m: 0.01,
        b_mode: cfg.b_mode,
    };
    for _ in 0..100 {
        let mut rates = draw_site_rates(&hp, n_sites, rng)?;
        if !cfg.with_error {
            rates.b.iter_mut().for_each(|b| *b = 0.0);
            rates.c.iter_mut().for_each(|c| *c = 0.0);
        }
        if log_prior(&rates, &hp, cfg.with_error) == f64::NEG_INFINITY {
            continue;
        }
        if let (Some(d), false) = (data, cfg.prior_only) {
            let ll = dataset_loglik(d, &rates, cfg.with_error)?;
            if ll == f64::NEG_INFINITY {
                continue;
            }
        }
        return Ok((rates, hp));
    }
    Err(Error::InvalidInit { reason: "could not draw an initial state with finite posterior".into() })
}

fn run_impl(
    data: Option<&Dataset>,
    n_sites: usize,
    cfg: &ChainConfig,
    init: Init,
    chain_id: u32,
) -> Result<ChainRun> {
    let mut chain = Chain::new(data, n_sites, cfg, init, chain_id)?;
    let burn = cfg.burn_in_sweeps();
    let mut rows = Vec::new();
    for t in 0..cfg.n_iterations {
        chain.sweep();
        if cfg.audit_every > 0 && (t + 1) % cfg.audit_every == 0 {
            chain.audit_and_refresh()?;
        }
        if t >= burn && (t + 1 - burn) % cfg.thin == 0 {
            rows.push(chain.row());
        }
    }
    let names = parameter_names(n_sites, chain.b_hierarchical());
    let n_rows = rows.len();
    let samples = PosteriorSamples::from_rows(names, rows, vec![chain_id; n_rows], Some(cfg.clone()))?;
    Ok(ChainRun { chain_id, samples, acceptance: chain.acceptance() })
}

/// Run one chain against a dataset.
pub fn run_chain(data: &Dataset, cfg: &ChainConfig, init: Init, chain_id: u32) -> Result<ChainRun> {
    let mut cfg = cfg.clone();
    cfg.prior_only = false;
    run_impl(Some(data), data.n_sites(), &cfg, init, chain_id)
}

/// Run one chain against the prior alone (no data term).
pub fn run_prior_chain(n_sites: usize, cfg: &ChainConfig, init: Init, chain_id: u32) -> Result<ChainRun> {
    let mut cfg = cfg.clone();
    cfg.prior_only = true;
    run_impl(None, n_sites, &cfg, init, chain_id)
}

/// Run `cfg.n_chains` independent chains sequentially. Chains use disjoint
/// RNG substreams, so results are identical to any concurrent schedule.
pub fn run_chains(data: &Dataset, cfg: &ChainConfig) -> Result<Vec<ChainRun>> {
    (0..cfg.n_chains).map(|c| run_chain(data, cfg, Init::Random, c as u32)).collect()
}
