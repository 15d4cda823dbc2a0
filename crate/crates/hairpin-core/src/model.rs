//! Domain types and the exact single-site transition and observation-error
//! probabilities for double-stranded methylation transmission.
//!
//! A CpG dyad carries a methylation state on each strand. During replication
//! the pre-replication parent state `p` produces a post-replication parent
//! state `q` and a daughter state `d`: maintenance keeps `d = 1` when `p = 1`
//! with probability `mu`, de novo events set `q` or `d` to 1 from `p = 0`
//! with probabilities `delta_p` and `delta_d`, and methyl groups are never
//! actively removed from the parent (`p = 1` forces `q = 1`). Bisulfite
//! conversion then reads each strand with two error modes: an unmethylated
//! site read as methylated (rate `b`) and a methylated site read as
//! unmethylated (rate `c`).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One observed double-stranded pattern: an unordered pair of equal-length
/// binary strands. Which strand is the parent is unobservable.
#[derive(Debug, Clone, Eq)]
pub struct MethylationPattern {
    pub strand_a: Vec<bool>,
    pub strand_b: Vec<bool>,
    pub id: String,
}

impl MethylationPattern {
    pub fn new(strand_a: Vec<bool>, strand_b: Vec<bool>, id: impl Into<String>) -> Result<Self> {
        if strand_a.len() != strand_b.len() {
            return Err(Error::DimensionMismatch {
                expected: strand_a.len(),
                found: strand_b.len(),
            });
        }
        if strand_a.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(MethylationPattern { strand_a, strand_b, id: id.into() })
    }

    /// Number of CpG sites.
    pub fn n_sites(&self) -> usize {
        self.strand_a.len()
    }

    pub fn strands_equal(&self) -> bool {
        self.strand_a == self.strand_b
    }

    /// Count of methylated positions over both strands.
    pub fn methylated_count(&self) -> usize {
        self.strand_a.iter().chain(&self.strand_b).filter(|&&x| x).count()
    }
}

/// Equality is unordered: `{a, b} == {b, a}`. Ids do not participate.
impl PartialEq for MethylationPattern {
    fn eq(&self, other: &Self) -> bool {
        (self.strand_a == other.strand_a && self.strand_b == other.strand_b)
            || (self.strand_a == other.strand_b && self.strand_b == other.strand_a)
    }
}

/// Per-site rate vectors for all S sites.
///
/// `mu` is the maintenance rate, `delta_p`/`delta_d` the parent and daughter
/// de novo rates, `m` the parent-strand methylation probability, and `b`/`c`
/// the two bisulfite conversion error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteRates {
    pub mu: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub delta_d: Vec<f64>,
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SiteRates {
    pub fn new(
        mu: Vec<f64>,
        delta_p: Vec<f64>,
        delta_d: Vec<f64>,
        m: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        let rates = SiteRates { mu, delta_p, delta_d, m, b, c };
        rates.validate()?;
        Ok(rates)
    }

    /// All six vectors set to a single shared value per family.
    pub fn shared(mu: f64, delta_p: f64, delta_d: f64, m: f64, b: f64, c: f64, n_sites: usize) -> Result<Self> {
        SiteRates::new(
            vec![mu; n_sites],
            vec![delta_p; n_sites],
            vec![delta_d; n_sites],
            vec![m; n_sites],
            vec![b; n_sites],
            vec![c; n_sites],
        )
    }

    pub fn n_sites(&self) -> usize {
        self.mu.len()
    }

    /// The six rates of one site as scalars.
    pub fn site(&self, j: usize) -> SiteParams {
        SiteParams {
            mu: self.mu[j],
            delta_p: self.delta_p[j],
            delta_d: self.delta_d[j],
            m: self.m[j],
            b: self.b[j],
            c: self.c[j],
        }
    }

    /// Write one site's scalars back into the vectors.
    pub fn set_site(&mut self, j: usize, p: &SiteParams) {
        self.mu[j] = p.mu;
        self.delta_p[j] = p.delta_p;
        self.delta_d[j] = p.delta_d;
        self.m[j] = p.m;
        self.b[j] = p.b;
        self.c[j] = p.c;
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.mu.len();
        for (name, v) in self.families() {
            if v.len() != s {
                return Err(Error::DimensionMismatch { expected: s, found: v.len() });
            }
            for &x in v {
                if !(0.0..=1.0).contains(&x) || x.is_nan() {
                    return Err(Error::NonProbability { name, value: x });
                }
            }
        }
        Ok(())
    }

    fn families(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("mu", &self.mu),
            ("delta_p", &self.delta_p),
            ("delta_d", &self.delta_d),
            ("m", &self.m),
            ("b", &self.b),
            ("c", &self.c),
        ]
    }
}

/// Scalar rates of a single site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteParams {
    pub mu: f64,
    pub delta_p: f64,
    pub delta_d: f64,
    pub m: f64,
    pub b: f64,
    pub c: f64,
}

/// How the failure-of-conversion rate `b` is treated during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BMode {
    /// All `b_j` pinned to one externally estimated value; `b` hyperparameters
    /// are carried but inert.
    Fixed(f64),
    /// `b_j` drawn from its own beta family and sampled like the other rates.
    Hierarchical,
}

/// Mean/scaled-variance pairs for each rate family plus the stationarity
/// spread `g_m`. See [`crate::hierarchy::BetaRg`] for the parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub mu: crate::hierarchy::BetaRg,
    pub delta_p: crate::hierarchy::BetaRg,
    pub delta_d: crate::hierarchy::BetaRg,
    pub b: crate::hierarchy::BetaRg,
    pub c: crate::hierarchy::BetaRg,
    /// Scaled variance of the stationarity-centered prior on `m`.
    pub g_m: f64,
    pub b_mode: BMode,
}

/// One site's latent replication event: pre-replication parent `p`,
/// post-replication parent `q`, daughter `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentTriple {
    pub p: bool,
    pub q: bool,
    pub d: bool,
}

impl LatentTriple {
    /// True unless the triple needs active demethylation (`p = 1, q = 0`).
    pub fn is_possible(self) -> bool {
        !(self.p && !self.q)
    }

    /// All eight triples, possible or not.
    pub fn all() -> impl Iterator<Item = LatentTriple> {
        (0u8..8).map(|k| LatentTriple { p: k & 4 != 0, q: k & 2 != 0, d: k & 1 != 0 })
    }
}

/// Probability of replication outcome `(q, d)` given parent state `p`,
/// as an explicit row-by-row lookup so tests can diff against the event table.
pub fn event_prob(q: bool, d: bool, p: bool, mu_j: f64, dp_j: f64, dd_j: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mu_j));
    debug_assert!((0.0..=1.0).contains(&dp_j));
    debug_assert!((0.0..=1.0).contains(&dd_j));
    match (q, d, p) {
        (false, false, true) => 0.0,                       // active removal: assumed not to occur
        (false, true, true) => 0.0,                        // active removal: assumed not to occur
        (true, false, true) => 1.0 - mu_j,                 // failure of maintenance
        (true, true, true) => mu_j,                        // maintenance
        (false, false, false) => (1.0 - dp_j) * (1.0 - dd_j), // no de novo on either strand
        (false, true, false) => (1.0 - dp_j) * dd_j,       // de novo on daughter only
        (true, false, false) => dp_j * (1.0 - dd_j),       // de novo on parent only
        (true, true, false) => dp_j * dd_j,                // de novo on both strands
    }
}

/// Probability of reading `observed` when the true state is `truth`, under
/// failure-of-conversion rate `b_j` and inappropriate-conversion rate `c_j`.
pub fn error_prob(observed: bool, truth: bool, b_j: f64, c_j: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&b_j));
    debug_assert!((0.0..=1.0).contains(&c_j));
    match (truth, observed) {
        (false, false) => 1.0 - b_j,
        (false, true) => b_j,
        (true, false) => c_j,
        (true, true) => 1.0 - c_j,
    }
}

/// Joint probability that one site of an ordered (parent, daughter) strand
/// pair is observed as `(x, y)`.
///
/// Marginalizes the parent state `p ~ Bernoulli(m)` and, when `with_error`
/// is set, the true post-replication states `(q, d)` under the conversion
/// error model. Linear-domain: the sum has at most eight nonnegative terms.
pub fn site_joint(x: bool, y: bool, p: &SiteParams, with_error: bool) -> f64 {
    let prior_p = |pp: bool| if pp { p.m } else { 1.0 - p.m };
    if !with_error {
        let mut total = 0.0;
        for pp in [false, true] {
            total += event_prob(x, y, pp, p.mu, p.delta_p, p.delta_d) * prior_p(pp);
        }
        return total;
    }
    let mut total = 0.0;
    for q in [false, true] {
        for d in [false, true] {
            let emit = error_prob(x, q, p.b, p.c) * error_prob(y, d, p.b, p.c);
            if emit == 0.0 {
                continue;
            }
            let mut transmit = 0.0;
            for pp in [false, true] {
                transmit += event_prob(q, d, pp, p.mu, p.delta_p, p.delta_d) * prior_p(pp);
            }
            total += emit * transmit;
        }
    }
    total
}

/// [`site_joint`] addressed by site index.
pub fn single_site_joint(x: bool, y: bool, j: usize, rates: &SiteRates, with_error: bool) -> f64 {
    site_joint(x, y, &rates.site(j), with_error)
}

/// The four observable probabilities `Pr((x, y))` at one site, indexed
/// `[x as usize][y as usize]`. One evaluation serves every pattern in a
/// dataset, which is what makes single-site MCMC updates cheap.
pub fn site_obs_table(p: &SiteParams, with_error: bool) -> [[f64; 2]; 2] {
    let mut t = [[0.0; 2]; 2];
    for (xi, x) in [false, true].into_iter().enumerate() {
        for (yi, y) in [false, true].into_iter().enumerate() {
            t[xi][yi] = site_joint(x, y, p, with_error);
        }
    }
    t
}
