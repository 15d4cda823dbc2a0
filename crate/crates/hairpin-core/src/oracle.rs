//! Independent verification engines: exhaustive likelihood enumeration,
//! exact dyad-class moments, a moment-matching fitter over summary fractions,
//! and an EM fitter for the shared-rate model.
//!
//! Everything here deliberately avoids the factorized likelihood path so the
//! two can be diffed against each other.

pub mod em;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{error_prob, event_prob, MethylationPattern, SiteRates};

/// Largest pattern length accepted by the exhaustive enumerations.
pub const MAX_ENUM_SITES: usize = 6;

/// Probability of an unordered observed pattern by brute force: both strand
/// assignments, every pre-replication parent vector, every true
/// post-replication configuration, and the per-strand error emissions, as one
/// flat sum of path products.
pub fn brute_force_pattern_prob(
    pat: &MethylationPattern,
    rates: &SiteRates,
    with_error: bool,
) -> Result<f64> {
    let s = pat.n_sites();
    if s > MAX_ENUM_SITES {
        return Err(Error::EnumerationTooLarge { sites: s, max: MAX_ENUM_SITES });
    }
    if s != rates.n_sites() {
        return Err(Error::DimensionMismatch { expected: rates.n_sites(), found: s });
    }
    let bit = |mask: u32, j: usize| mask >> j & 1 == 1;
    let mut total = 0.0;
    for (x, y) in [(&pat.strand_a, &pat.strand_b), (&pat.strand_b, &pat.strand_a)] {
        for p_mask in 0..1u32 << s {
            for q_mask in 0..1u32 << s {
                for d_mask in 0..1u32 << s {
                    let mut prob = 1.0;
                    for j in 0..s {
                        let (p, q, d) = (bit(p_mask, j), bit(q_mask, j), bit(d_mask, j));
                        let parent = if p { rates.m[j] } else { 1.0 - rates.m[j] };
                        let transmit = event_prob(q, d, p, rates.mu[j], rates.delta_p[j], rates.delta_d[j]);
                        let emit = if with_error {
                            error_prob(x[j], q, rates.b[j], rates.c[j])
                                * error_prob(y[j], d, rates.b[j], rates.c[j])
                        } else if x[j] == q && y[j] == d {
                            1.0
                        } else {
                            0.0
                        };
                        prob *= parent * transmit * emit;
                        if prob == 0.0 {
                            break;
                        }
                    }
                    total += prob;
                }
            }
        }
    }
    if pat.strands_equal() {
        total *= 0.5;
    }
    Ok(total)
}

/// Exact probabilities that an observed dyad is doubly methylated,
/// hemimethylated (either orientation), or doubly unmethylated, marginalizing
/// the full single-site model with error.
pub fn expected_dyad_fractions(mu: f64, dp: f64, dd: f64, m: f64, b: f64, c: f64) -> (f64, f64, f64) {
    debug_assert!([mu, dp, dd, m, b, c].iter().all(|v| (0.0..=1.0).contains(v)));
    let mut obs = [[0.0f64; 2]; 2];
    for p in [false, true] {
        let parent = if p { m } else { 1.0 - m };
        for q in [false, true] {
            for d in [false, true] {
                let base = parent * event_prob(q, d, p, mu, dp, dd);
                if base == 0.0 {
                    continue;
                }
                for ox in [false, true] {
                    for oy in [false, true] {
                        obs[ox as usize][oy as usize] +=
                            base * error_prob(ox, q, b, c) * error_prob(oy, d, b, c);
                    }
                }
            }
        }
    }
    (obs[1][1], obs[1][0] + obs[0][1], obs[0][0])
}

/// One grid point of the moment-matching solution family.
#[derive(Debug, Clone, Copy)]
pub struct MomentPoint {
    pub c: f64,
    pub feasible: bool,
    /// Failure-of-maintenance rate `1 - mu` solving the moments at this `c`.
    pub one_minus_mu: f64,
    /// Total de novo rate `dp + dd` (split evenly between strands).
    pub total_de_novo: f64,
}

/// Fit the single-site moments: for each `c` on the grid, solve for
/// `(mu, dp + dd)` such that the stationary model reproduces the observed
/// dyad fractions, with de novo split evenly between strands. The observed
/// fractions carry two degrees of freedom against three unknowns, so the
/// result is a one-parameter family indexed by `c`.
pub fn moment_fit(observed: (f64, f64, f64), b: f64, c_grid: &[f64]) -> Result<Vec<MomentPoint>> {
    let (p_m, p_h, p_u) = observed;
    let sum = p_m + p_h + p_u;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions { sum });
    }
    let mut family = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        family.push(solve_moments(p_m, p_h, b, c));
    }
    Ok(family)
}

/// Model dyad fractions under stationarity with symmetric de novo.
fn stationary_fractions(mu: f64, total_de_novo: f64, b: f64, c: f64) -> Option<(f64, f64, f64)> {
    let half = total_de_novo / 2.0;
    let m = crate::hierarchy::stationary_density(mu, half, half).ok()?;
    if !(0.0..=1.0).contains(&m) {
        return None;
    }
    Some(expected_dyad_fractions(mu, half, half, m, b, c))
}

/// Damped Newton iteration on `(mu, total_de_novo)` with a numeric Jacobian,
/// falling back to a coarse grid start when the default start stalls.
fn solve_moments(p_m: f64, p_h: f64, b: f64, c: f64) -> MomentPoint {
    let infeasible = MomentPoint { c, feasible: false, one_minus_mu: f64::NAN, total_de_novo: f64::NAN };
    let residual = |mu: f64, d: f64| -> Option<(f64, f64)> {
        let (fm, fh, _) = stationary_fractions(mu, d, b, c)?;
        Some((fm - p_m, fh - p_h))
    };
    let attempt = |mu0: f64, d0: f64| -> Option<(f64, f64)> {
        let (mut mu, mut d) = (mu0, d0);
        let lo = 1e-9;
        for _ in 0..200 {
            let (f1, f2) = residual(mu, d)?;
            if f1.abs() < 1e-12 && f2.abs() < 1e-12 {
                return Some((mu, d));
            }
            let h = 1e-7;
            let (f1mu, f2mu) = residual((mu + h).min(1.0 - lo), d)?;
            let (f1d, f2d) = residual(mu, (d + h).min(2.0 - lo))?;
            let j11 = (f1mu - f1) / h;
            let j12 = (f1d - f1) / h;
            let j21 = (f2mu - f2) / h;
            let j22 = (f2d - f2) / h;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < 1e-14 {
                return None;
            }
            let step_mu = (f1 * j22 - f2 * j12) / det;
            let step_d = (f2 * j11 - f1 * j21) / det;
            mu = (mu - step_mu).clamp(lo, 1.0 - lo);
            d = (d - step_d).clamp(lo, 2.0 - lo);
        }
        None
    };
    let mut solution = attempt(0.95, 0.15);
    if solution.is_none() {
        'search: for mu0 in [0.5, 0.7, 0.85, 0.9, 0.99] {
            for d0 in [0.02, 0.1, 0.3, 0.8, 1.5] {
                solution = attempt(mu0, d0);
                if solution.is_some() {
                    break 'search;
                }
            }
        }
    }
    match solution {
        Some((mu, d)) if (0.0..=1.0).contains(&mu) && (0.0..=2.0).contains(&d) => {
            // Reject pinned boundary pseudo-solutions.
            let (f1, f2) = residual(mu, d).unwrap_or((1.0, 1.0));
            if f1.abs() < 1e-9 && f2.abs() < 1e-9 {
                MomentPoint { c, feasible: true, one_minus_mu: 1.0 - mu, total_de_novo: d }
            } else {
                infeasible
            }
        }
        _ => infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{pattern_loglik, Dataset};
    use crate::math;
    use crate::model::SiteRates;
    use crate::rng::Rng;
    use crate::simulator::simulate_dataset;
    use alloc::format;
    use alloc::vec;

    fn random_rates(rng: &mut Rng, s: usize) -> SiteRates {
        SiteRates::new(
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.02, 0.98)).collect(),
            (0..s).map(|_| rng.uniform_in(0.0, 0.25)).collect(),
            (0..s).map(|_| rng.uniform_in(0.0, 0.25)).collect(),
        )
        .unwrap()
    }

    fn random_pattern(rng: &mut Rng, s: usize) -> MethylationPattern {
        MethylationPattern::new(
            (0..s).map(|_| rng.bernoulli(0.5)).collect(),
            (0..s).map(|_| rng.bernoulli(0.5)).collect(),
            "r",
        )
        .unwrap()
    }

    #[test]
    fn brute_force_agrees_with_factorized_likelihood() {
        let mut rng = Rng::new(101);
        for trial in 0..200 {
            let s = 1 + rng.index(4);
            let rates = random_rates(&mut rng, s);
            let pat = random_pattern(&mut rng, s);
            for with_error in [false, true] {
                let brute = brute_force_pattern_prob(&pat, &rates, with_error).unwrap();
                let fast = math::exp(pattern_loglik(&pat, &rates, with_error).unwrap());
                let scale = brute.abs().max(1e-300);
                assert!(
                    (brute - fast).abs() / scale < 1e-12,
                    "trial {trial} s={s} err={with_error}: {brute} vs {fast}"
                );
            }
        }
    }

    #[test]
    fn deterministic_rates_give_zero_one() {
        let rates = SiteRates::shared(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1).unwrap();
        let both = MethylationPattern::new(vec![true], vec![true], "m").unwrap();
        let hemi = MethylationPattern::new(vec![true], vec![false], "h").unwrap();
        assert_eq!(brute_force_pattern_prob(&both, &rates, false).unwrap(), 1.0);
        assert_eq!(brute_force_pattern_prob(&hemi, &rates, false).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_normalizes_over_observables() {
        let mut rng = Rng::new(7);
        let rates = random_rates(&mut rng, 2);
        let strand = |k: usize| (0..2).map(|j| k >> j & 1 == 1).collect::<Vec<bool>>();
        for with_error in [false, true] {
            let mut total = 0.0;
            for a in 0..4 {
                for b in a..4 {
                    let pat = MethylationPattern::new(strand(a), strand(b), format!("{a}{b}")).unwrap();
                    total += brute_force_pattern_prob(&pat, &rates, with_error).unwrap();
                }
            }
            assert!((total - 1.0).abs() < 1e-12, "err={with_error} total={total}");
        }
    }

    #[test]
    fn enumeration_bound_enforced() {
        let rates = SiteRates::shared(0.9, 0.1, 0.1, 0.5, 0.0, 0.0, 7).unwrap();
        let pat = MethylationPattern::new(vec![true; 7], vec![true; 7], "long").unwrap();
        assert!(matches!(
            brute_force_pattern_prob(&pat, &rates, false).unwrap_err(),
            Error::EnumerationTooLarge { .. }
        ));
    }

    #[test]
    fn dyad_fractions_certain_case() {
        assert_eq!(expected_dyad_fractions(1.0, 0.0, 0.0, 1.0, 0.0, 0.0), (1.0, 0.0, 0.0));
    }

    #[test]
    fn dyad_fractions_sum_to_one() {
        let mut rng = Rng::new(8);
        for _ in 0..200 {
            let (p_m, p_h, p_u) = expected_dyad_fractions(
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
            );
            assert!((p_m + p_h + p_u - 1.0).abs() < 1e-12);
            assert!(p_m >= 0.0 && p_h >= 0.0 && p_u >= 0.0);
        }
    }

    #[test]
    fn raising_c_drains_doubly_methylated_mass() {
        // At high-methylation settings, inappropriate conversion moves mass
        // from p_M toward p_H and p_U.
        let (mu, dp, dd) = (0.976, 0.08, 0.07);
        let m = crate::hierarchy::stationary_density(mu, dp, dd).unwrap();
        let mut prev = expected_dyad_fractions(mu, dp, dd, m, 0.003, 0.0);
        for step in 1..=12 {
            let c = step as f64 * 0.005;
            let next = expected_dyad_fractions(mu, dp, dd, m, 0.003, c);
            assert!(next.0 < prev.0, "p_M must fall as c rises (c={c})");
            assert!(next.1 > prev.1, "p_H must rise as c rises (c={c})");
            assert!(next.2 > prev.2, "p_U must rise as c rises (c={c})");
            prev = next;
        }
    }

    #[test]
    fn dyad_fractions_match_simulation() {
        let (mu, dp, dd) = (0.976, 0.08, 0.07);
        let m = crate::hierarchy::stationary_density(mu, dp, dd).unwrap();
        let (b, c) = (0.003, 0.016);
        let rates = SiteRates::shared(mu, dp, dd, m, b, c, 4).unwrap();
        let n = 30_000;
        let data = simulate_dataset(&rates, n, 55).unwrap();
        let (e_m, e_h, e_u) = expected_dyad_fractions(mu, dp, dd, m, b, c);
        let (o_m, o_h, o_u) = data.dyad_fractions();
        let dyads = (n * 4) as f64;
        for (obs, exp) in [(o_m, e_m), (o_h, e_h), (o_u, e_u)] {
            let se = math::sqrt(exp * (1.0 - exp) / dyads);
            assert!((obs - exp).abs() < 3.0 * se, "{obs} vs {exp} (se {se})");
        }
    }

    #[test]
    fn moment_fit_recovers_known_parameters() {
        let truth_mu = 0.97;
        let truth_d = 0.15;
        let (b, c_true) = (0.003, 0.02);
        let observed = stationary_fractions(truth_mu, truth_d, b, c_true).unwrap();
        let family = moment_fit(observed, b, &[0.0, 0.01, c_true, 0.04]).unwrap();
        let at_truth = family[2];
        assert!(at_truth.feasible);
        assert!((at_truth.one_minus_mu - (1.0 - truth_mu)).abs() < 1e-8);
        assert!((at_truth.total_de_novo - truth_d).abs() < 1e-8);
    }

    #[test]
    fn moment_fit_recovers_error_free_simulation() {
        let (mu, dp, dd) = (0.95, 0.06, 0.06);
        let m = crate::hierarchy::stationary_density(mu, dp, dd).unwrap();
        let rates = SiteRates::shared(mu, dp, dd, m, 0.0, 0.0, 4).unwrap();
        let data = simulate_dataset(&rates, 50_000, 77).unwrap();
        let observed = data.dyad_fractions();
        // Renormalize away the last-digit drift before fitting.
        let sum = observed.0 + observed.1 + observed.2;
        let observed = (observed.0 / sum, observed.1 / sum, observed.2 / sum);
        let family = moment_fit(observed, 0.0, &[0.0]).unwrap();
        assert!(family[0].feasible);
        assert!((family[0].one_minus_mu - 0.05).abs() < 0.01, "{}", family[0].one_minus_mu);
        assert!((family[0].total_de_novo - 0.12).abs() < 0.04, "{}", family[0].total_de_novo);
    }

    #[test]
    fn moment_family_on_reported_fractions_is_affine_in_c() {
        // The family traced over c for the published summary fractions is
        // near-perfectly affine: raising the assumed error rate lowers the
        // failure-of-maintenance rate needed to explain the observed
        // hemimethylation (1 - mu ~ 0.04 - 1.07 c), and the implied de novo
        // rate falls with it until the family leaves the feasible region a
        // little above c = 0.03, where de novo would need to go negative.
        // The intercept at c = 0 reproduces the error-blind estimate and the
        // value at c = 0.016 the error-aware one.
        let observed = (0.82, 0.064, 0.116);
        let grid: Vec<f64> = (0..=12).map(|i| i as f64 * 0.005).collect();
        let family = moment_fit(observed, 0.003, &grid).unwrap();
        let pts: Vec<&MomentPoint> = family.iter().filter(|p| p.feasible).collect();
        assert!(pts.len() >= 6, "low-c grid points should be feasible, got {}", pts.len());
        assert!(
            family.iter().filter(|p| p.c > 0.045).all(|p| !p.feasible),
            "high-c points cannot reproduce the fractions"
        );
        let xs: Vec<f64> = pts.iter().map(|p| p.c).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.one_minus_mu).collect();
        let line = crate::posterior::scatter_xy(xs, ys).unwrap();
        assert!(line.correlation < -0.999, "correlation {}", line.correlation);
        assert!((0.8..=1.3).contains(&line.slope.abs()), "slope {}", line.slope);
        assert!((0.03..=0.05).contains(&line.intercept), "intercept {}", line.intercept);
        let at_0016 = solve_moments(0.82, 0.064, 0.003, 0.016);
        assert!(at_0016.feasible);
        assert!((at_0016.one_minus_mu - 0.024).abs() < 0.004, "{}", at_0016.one_minus_mu);
        for w in pts.windows(2) {
            assert!(
                w[1].total_de_novo < w[0].total_de_novo + 1e-12,
                "de novo must decrease along the family"
            );
        }
    }

    #[test]
    fn moment_fit_rejects_bad_fractions() {
        assert!(matches!(
            moment_fit((0.5, 0.4, 0.3), 0.0, &[0.0]).unwrap_err(),
            Error::BadFractions { .. }
        ));
    }

    #[test]
    fn infeasible_grid_points_are_marked() {
        // Unmethylated-heavy observations cannot be explained once c gets
        // large at near-total maintenance; expect some infeasible entries
        // rather than bogus solutions.
        let observed = (0.97, 0.02, 0.01);
        let family = moment_fit(observed, 0.003, &[0.0, 0.02, 0.3, 0.9]).unwrap();
        assert!(family.iter().any(|p| p.feasible));
        for p in &family {
            if p.feasible {
                assert!((0.0..=1.0).contains(&p.one_minus_mu));
                assert!((0.0..=2.0).contains(&p.total_de_novo));
            }
        }
    }

    #[test]
    fn uses_dataset_helper() {
        // dyad_fractions on a hand-built dataset.
        let pats = vec![
            MethylationPattern::new(vec![true, true], vec![true, false], "a").unwrap(),
            MethylationPattern::new(vec![false, false], vec![false, false], "b").unwrap(),
        ];
        let data = Dataset::new(pats, "hand").unwrap();
        let (m, h, u) = data.dyad_fractions();
        assert!((m - 0.25).abs() < 1e-12);
        assert!((h - 0.25).abs() < 1e-12);
        assert!((u - 0.5).abs() < 1e-12);
    }
}
