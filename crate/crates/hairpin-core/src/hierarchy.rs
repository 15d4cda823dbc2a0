//! The rate hierarchy: beta distributions in mean/scaled-variance form, the
//! stationarity-centered prior on the parent methylation probability, and the
//! joint log-prior over site rates and hyperparameters.

use crate::error::{Error, Result};
use crate::math;
use crate::model::{BMode, HyperParams, SiteRates};

/// Upper bound of the uniform hyperprior on the mean inappropriate-conversion
/// rate `r_c`; conversion experiments bound the rate below this.
pub const R_C_MAX: f64 = 0.06;

/// Support of the uniform hyperprior on each `log10 g`.
pub const LOG10_G_MIN: f64 = -4.0;
pub const LOG10_G_MAX: f64 = 0.0;

/// Smallest allowed stationarity denominator `1 + dp + dd - mu`. States below
/// this are treated as out of support rather than special-cased.
pub const STATIONARITY_EPS: f64 = 1e-12;

/// A beta distribution given by mean `r` and scaled variance `g`, where the
/// variance is `g * r * (1 - r)`. Both parameters live in the open unit
/// interval; `g -> 0` concentrates the distribution at `r` and `g -> 1`
/// spreads it to the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRg {
    pub r: f64,
    pub g: f64,
}

impl BetaRg {
    pub fn new(r: f64, g: f64) -> Result<Self> {
        let rg = BetaRg { r, g };
        rg.alpha_beta()?;
        Ok(rg)
    }

    /// Invert the mean/scaled-variance map to conventional shape parameters:
    /// `alpha + beta = (1 - g) / g` and `alpha = r (1 - g) / g`.
    pub fn alpha_beta(&self) -> Result<(f64, f64)> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::BoundaryParameter { name: "r", value: self.r });
        }
        if !(self.g > 0.0 && self.g < 1.0) {
            return Err(Error::BoundaryParameter { name: "g", value: self.g });
        }
        let total = (1.0 - self.g) / self.g;
        Ok((self.r * total, (1.0 - self.r) * total))
    }

    /// Forward map from shape parameters.
    pub fn from_alpha_beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::BoundaryParameter { name: "alpha", value: alpha });
        }
        if !(beta > 0.0) {
            return Err(Error::BoundaryParameter { name: "beta", value: beta });
        }
        Ok(BetaRg { r: alpha / (alpha + beta), g: 1.0 / (alpha + beta + 1.0) })
    }

    /// Normalized log-density at `x`; `-inf` outside the open unit interval.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        let (alpha, beta) = match self.alpha_beta() {
            Ok(ab) => ab,
            Err(_) => return f64::NEG_INFINITY,
        };
        (alpha - 1.0) * math::ln(x) + (beta - 1.0) * math::ln_1p(-x) - math::ln_beta_fn(alpha, beta)
    }
}

/// Fixed-point methylation density implied by one generation of transmission:
/// `(dp + dd) / (1 + dp + dd - mu)`. This is the mean of the
/// stationarity-centered prior on `m`.
pub fn stationary_density(mu_j: f64, dp_j: f64, dd_j: f64) -> Result<f64> {
    let denominator = 1.0 + dp_j + dd_j - mu_j;
    if denominator <= STATIONARITY_EPS {
        return Err(Error::AbsorbingChain { denominator });
    }
    // Rounding in the denominator can push the ratio a few ulp past 1.
    Ok(((dp_j + dd_j) / denominator).clamp(0.0, 1.0))
}

fn in_open(x: f64, lo: f64, hi: f64) -> bool {
    x > lo && x < hi
}

/// Support indicator for the hyperparameters, `0.0` inside and `-inf`
/// outside. The uniform densities are left unnormalized; each `g` is uniform
/// on the `log10` scale, which is also the scale the sampler proposes on, so
/// no change-of-variable term appears here.
pub fn hyper_support(hp: &HyperParams, with_error: bool) -> f64 {
    let mut ok = in_open(hp.mu.r, 0.0, 1.0)
        && in_open(hp.delta_p.r, 0.0, 1.0)
        && in_open(hp.delta_d.r, 0.0, 1.0)
        && in_open(math::log10(hp.mu.g), LOG10_G_MIN, LOG10_G_MAX)
        && in_open(math::log10(hp.delta_p.g), LOG10_G_MIN, LOG10_G_MAX)
        && in_open(math::log10(hp.delta_d.g), LOG10_G_MIN, LOG10_G_MAX)
        && in_open(math::log10(hp.g_m), LOG10_G_MIN, LOG10_G_MAX);
    if with_error {
        ok = ok
            && in_open(hp.c.r, 0.0, R_C_MAX)
            && in_open(math::log10(hp.c.g), LOG10_G_MIN, LOG10_G_MAX);
        if hp.b_mode == BMode::Hierarchical {
            ok = ok
                && in_open(hp.b.r, 0.0, 1.0)
                && in_open(math::log10(hp.b.g), LOG10_G_MIN, LOG10_G_MAX);
        }
    }
    if ok {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Joint log-density of the site rates given the hyperparameters plus the
/// hyperprior indicators. Returns `-inf` exactly when some parameter leaves
/// its support.
///
/// With `with_error = false` the conversion error families `b` and `c` are
/// inert (the no-error ablation pins them to zero) and contribute no terms;
/// the same applies to `b` under [`BMode::Fixed`].
pub fn log_prior(rates: &SiteRates, hp: &HyperParams, with_error: bool) -> f64 {
    let support = hyper_support(hp, with_error);
    if support == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut total = support;
    for j in 0..rates.n_sites() {
        total += hp.mu.log_pdf(rates.mu[j]);
        total += hp.delta_p.log_pdf(rates.delta_p[j]);
        total += hp.delta_d.log_pdf(rates.delta_d[j]);
        total += m_log_prior_term(rates, hp, j);
        if with_error {
            total += hp.c.log_pdf(rates.c[j]);
            if hp.b_mode == BMode::Hierarchical {
                total += hp.b.log_pdf(rates.b[j]);
            }
        }
        if total == f64::NEG_INFINITY {
            return total;
        }
    }
    total
}

/// The `m_j` prior term: beta with mean at the stationary density implied by
/// the current `(mu_j, dp_j, dd_j)` and spread `g_m`. Recomputed from the
/// current state at every evaluation.
pub fn m_log_prior_term(rates: &SiteRates, hp: &HyperParams, j: usize) -> f64 {
    let center = match stationary_density(rates.mu[j], rates.delta_p[j], rates.delta_d[j]) {
        Ok(c) => c,
        Err(_) => return f64::NEG_INFINITY,
    };
    if !(center > 0.0 && center < 1.0) {
        return f64::NEG_INFINITY;
    }
    BetaRg { r: center, g: hp.g_m }.log_pdf(rates.m[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BMode;
    use alloc::vec;

    fn demo_hp() -> HyperParams {
        HyperParams {
            mu: BetaRg { r: 0.976, g: 0.001 },
            delta_p: BetaRg { r: 0.08, g: 0.003 },
            delta_d: BetaRg { r: 0.07, g: 0.003 },
            b: BetaRg { r: 0.003, g: 0.001 },
            c: BetaRg { r: 0.016, g: 0.001 },
            g_m: 0.01,
            b_mode: BMode::Fixed(0.003),
        }
    }

    #[test]
    fn uniform_and_symmetric_cases() {
        let uniform = BetaRg { r: 0.5, g: 1.0 / 3.0 };
        let (a, b) = uniform.alpha_beta().unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);

        let sym = BetaRg::from_alpha_beta(2.0, 2.0).unwrap();
        assert!((sym.r - 0.5).abs() < 1e-14);
        assert!((sym.g - 0.2).abs() < 1e-14);
    }

    #[test]
    fn round_trip_over_grid() {
        let mut worst = 0.0f64;
        for i in 1..20 {
            for k in 1..20 {
                let rg = BetaRg { r: i as f64 / 20.0, g: k as f64 / 20.0 };
                let (a, b) = rg.alpha_beta().unwrap();
                let back = BetaRg::from_alpha_beta(a, b).unwrap();
                worst = worst.max((back.r - rg.r).abs()).max((back.g - rg.g).abs());
            }
        }
        assert!(worst < 1e-12, "worst round-trip error {worst}");
    }

    #[test]
    fn boundary_parameters_rejected() {
        assert!(BetaRg::new(0.0, 0.5).is_err());
        assert!(BetaRg::new(1.0, 0.5).is_err());
        assert!(BetaRg::new(0.5, 0.0).is_err());
        assert!(BetaRg::new(0.5, 1.0).is_err());
    }

    #[test]
    fn log_pdf_uniform_is_zero() {
        let uniform = BetaRg { r: 0.5, g: 1.0 / 3.0 };
        for &x in &[0.1, 0.5, 0.9] {
            assert!(uniform.log_pdf(x).abs() < 1e-12);
        }
    }

    #[test]
    fn log_pdf_beta22_at_half() {
        let rg = BetaRg { r: 0.5, g: 0.2 };
        assert!((rg.log_pdf(0.5) - math::ln(1.5)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_outside_support() {
        let rg = BetaRg { r: 0.5, g: 0.2 };
        assert_eq!(rg.log_pdf(0.0), f64::NEG_INFINITY);
        assert_eq!(rg.log_pdf(1.0), f64::NEG_INFINITY);
        assert_eq!(rg.log_pdf(-0.3), f64::NEG_INFINITY);
    }

    #[test]
    fn log_pdf_integrates_to_one() {
        // Composite Simpson quadrature as an independent check of the
        // normalizing constant.
        for rg in [BetaRg { r: 0.5, g: 0.2 }, BetaRg { r: 0.3, g: 0.1 }, BetaRg { r: 0.7, g: 0.05 }] {
            let n = 200_000usize; // even
            let (lo, hi) = (1e-9, 1.0 - 1e-9);
            let h = (hi - lo) / n as f64;
            let mut acc = math::exp(rg.log_pdf(lo)) + math::exp(rg.log_pdf(hi));
            for i in 1..n {
                let x = lo + i as f64 * h;
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * math::exp(rg.log_pdf(x));
            }
            let integral = acc * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-7, "integral {integral} for {rg:?}");
        }
    }

    #[test]
    fn stationary_density_values() {
        assert_eq!(stationary_density(0.5, 0.0, 0.0).unwrap(), 0.0);
        let v = stationary_density(0.976, 0.08, 0.07).unwrap();
        assert!((v - 0.15 / 0.174).abs() < 1e-12);
        assert!(matches!(
            stationary_density(1.0, 0.0, 0.0),
            Err(Error::AbsorbingChain { .. })
        ));
    }

    #[test]
    fn stationary_density_stays_in_unit_interval() {
        for i in 0..=10 {
            for k in 0..=10 {
                for l in 0..=10 {
                    let (mu, dp, dd) = (i as f64 / 10.0, k as f64 / 10.0, l as f64 / 10.0);
                    if let Ok(v) = stationary_density(mu, dp, dd) {
                        assert!((0.0..=1.0).contains(&v), "({mu},{dp},{dd}) -> {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn prior_rejects_out_of_support_hypers() {
        let rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.003, 0.02, 2).unwrap();
        let mut hp = demo_hp();
        hp.c.r = 0.07; // above the r_c bound
        assert_eq!(log_prior(&rates, &hp, true), f64::NEG_INFINITY);

        let mut hp = demo_hp();
        hp.mu.g = 1e-5; // log10 g = -5
        assert_eq!(log_prior(&rates, &hp, true), f64::NEG_INFINITY);

        // Inert families impose no constraint.
        let mut hp = demo_hp();
        hp.c.r = 0.07;
        assert!(log_prior(&rates, &hp, false).is_finite());
    }

    #[test]
    fn prior_matches_term_by_term_sum() {
        let hp = demo_hp();
        let rates = SiteRates::new(
            vec![0.97, 0.98],
            vec![0.08, 0.09],
            vec![0.06, 0.07],
            vec![0.86, 0.88],
            vec![0.003, 0.003],
            vec![0.015, 0.02],
        )
        .unwrap();
        let mut expected = 0.0;
        for j in 0..2 {
            expected += hp.mu.log_pdf(rates.mu[j]);
            expected += hp.delta_p.log_pdf(rates.delta_p[j]);
            expected += hp.delta_d.log_pdf(rates.delta_d[j]);
            let center = stationary_density(rates.mu[j], rates.delta_p[j], rates.delta_d[j]).unwrap();
            expected += BetaRg { r: center, g: hp.g_m }.log_pdf(rates.m[j]);
            expected += hp.c.log_pdf(rates.c[j]);
        }
        let got = log_prior(&rates, &hp, true);
        assert!(got.is_finite());
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn hierarchical_b_adds_terms() {
        let rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.004, 0.02, 2).unwrap();
        let mut hp = demo_hp();
        let fixed = log_prior(&rates, &hp, true);
        hp.b_mode = BMode::Hierarchical;
        let hier = log_prior(&rates, &hp, true);
        let b_terms: f64 = (0..2).map(|j| hp.b.log_pdf(rates.b[j])).sum();
        assert!((hier - fixed - b_terms).abs() < 1e-10);
    }
}
