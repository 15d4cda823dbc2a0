//! Forward generative sampling under the full model, and multi-generation
//! iteration of the transmission process for stationarity studies.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::hierarchy::{stationary_density, BetaRg};
use crate::likelihood::Dataset;
use crate::model::{BMode, HyperParams, MethylationPattern, SiteRates};
use crate::rng::Rng;

/// Simulate one replication event per pattern and observe both strands
/// through the conversion-error channel. Strand order is randomized by a fair
/// coin so the emitted pair carries no strand-type information. Pattern `i`
/// draws from substream `i`, so output is reproducible for a given seed
/// regardless of how patterns are scheduled.
pub fn simulate_dataset(rates: &SiteRates, n_patterns: usize, seed: u64) -> Result<Dataset> {
    rates.validate()?;
    assert!(n_patterns >= 1, "need at least one pattern");
    let s = rates.n_sites();
    let mut patterns = Vec::with_capacity(n_patterns);
    for i in 0..n_patterns {
        let mut rng = Rng::substream(seed, i as u64);
        let mut parent = Vec::with_capacity(s);
        let mut daughter = Vec::with_capacity(s);
        for j in 0..s {
            let p = rng.bernoulli(rates.m[j]);
            let q = if p { true } else { rng.bernoulli(rates.delta_p[j]) };
            let d = if p { rng.bernoulli(rates.mu[j]) } else { rng.bernoulli(rates.delta_d[j]) };
            parent.push(observe(q, rates.b[j], rates.c[j], &mut rng));
            daughter.push(observe(d, rates.b[j], rates.c[j], &mut rng));
        }
        let (a, b) = if rng.bernoulli(0.5) { (daughter, parent) } else { (parent, daughter) };
        patterns.push(MethylationPattern::new(a, b, format!("sim{i:05}"))?);
    }
    Dataset::new(patterns, format!("simulated seed={seed}"))
}

#[inline]
fn observe(truth: bool, b: f64, c: f64, rng: &mut Rng) -> bool {
    if truth {
        !rng.bernoulli(c)
    } else {
        rng.bernoulli(b)
    }
}

/// Exact one-generation recursion of the methylation density: both strands of
/// the replicated dyad persist, so the next parent is the post-replication
/// parent or the daughter with equal probability.
pub fn expected_density_step(m: f64, mu: f64, dp: f64, dd: f64) -> f64 {
    m * (1.0 + mu) / 2.0 + (1.0 - m) * (dp + dd) / 2.0
}

/// Evolve a population of strand lineages through repeated replication and
/// return the per-generation, per-site methylated fraction on parent strands.
/// Row 0 is the initial density; row `t` follows `t` replications. No
/// measurement error is applied.
pub fn iterate_generations(
    initial_m: &[f64],
    rates: &SiteRates,
    generations: usize,
    population: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    rates.validate()?;
    assert!(generations >= 1, "need at least one generation");
    assert!(population >= 1, "need at least one lineage");
    let s = rates.n_sites();
    if initial_m.len() != s {
        return Err(crate::error::Error::DimensionMismatch { expected: s, found: initial_m.len() });
    }
    let mut lineages: Vec<Vec<bool>> = (0..population)
        .map(|l| {
            let mut rng = Rng::substream(seed, l as u64);
            (0..s).map(|j| rng.bernoulli(initial_m[j])).collect()
        })
        .collect();
    let mut rngs: Vec<Rng> =
        (0..population).map(|l| Rng::substream(seed ^ 0x9e3779b97f4a7c15, l as u64)).collect();

    let density = |pop: &Vec<Vec<bool>>| -> Vec<f64> {
        (0..s)
            .map(|j| pop.iter().filter(|lineage| lineage[j]).count() as f64 / population as f64)
            .collect()
    };

    let mut trajectory = Vec::with_capacity(generations + 1);
    trajectory.push(density(&lineages));
    for _ in 0..generations {
        for (lineage, rng) in lineages.iter_mut().zip(rngs.iter_mut()) {
            for j in 0..s {
                let p = lineage[j];
                // The dyad's two strands both become parents; a fixed-size
                // population follows one of them chosen by a fair coin.
                let next = if rng.bernoulli(0.5) {
                    if p { true } else { rng.bernoulli(rates.delta_p[j]) }
                } else if p {
                    rng.bernoulli(rates.mu[j])
                } else {
                    rng.bernoulli(rates.delta_d[j])
                };
                lineage[j] = next;
            }
        }
        trajectory.push(density(&lineages));
    }
    Ok(trajectory)
}

/// Draw per-site rates from the hierarchy: each family from its beta
/// distribution and `m_j` from the stationarity-centered beta.
pub fn draw_site_rates(hp: &HyperParams, n_sites: usize, rng: &mut Rng) -> Result<SiteRates> {
    let draw = |rg: &BetaRg, rng: &mut Rng| -> Result<f64> {
        let (alpha, beta) = rg.alpha_beta()?;
        Ok(rng.beta(alpha, beta))
    };
    let mut mu = Vec::with_capacity(n_sites);
    let mut dp = Vec::with_capacity(n_sites);
    let mut dd = Vec::with_capacity(n_sites);
    let mut m = Vec::with_capacity(n_sites);
    let mut b = Vec::with_capacity(n_sites);
    let mut c = Vec::with_capacity(n_sites);
    for _ in 0..n_sites {
        let mu_j = draw(&hp.mu, rng)?;
        let dp_j = draw(&hp.delta_p, rng)?;
        let dd_j = draw(&hp.delta_d, rng)?;
        let center = stationary_density(mu_j, dp_j, dd_j)?;
        let m_j = if center > 0.0 && center < 1.0 {
            draw(&BetaRg { r: center, g: hp.g_m }, rng)?
        } else {
            center
        };
        mu.push(mu_j);
        dp.push(dp_j);
        dd.push(dd_j);
        m.push(m_j);
        b.push(match hp.b_mode {
            BMode::Fixed(v) => v,
            BMode::Hierarchical => draw(&hp.b, rng)?,
        });
        c.push(draw(&hp.c, rng)?);
    }
    SiteRates::new(mu, dp, dd, m, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::pattern_loglik;
    use crate::math;
    use alloc::vec;

    #[test]
    fn identical_seeds_identical_datasets() {
        let rates = SiteRates::shared(0.9, 0.1, 0.08, 0.7, 0.003, 0.016, 4).unwrap();
        let a = simulate_dataset(&rates, 50, 99).unwrap();
        let b = simulate_dataset(&rates, 50, 99).unwrap();
        for (x, y) in a.patterns().iter().zip(b.patterns()) {
            assert_eq!(x.strand_a, y.strand_a);
            assert_eq!(x.strand_b, y.strand_b);
        }
        let c = simulate_dataset(&rates, 50, 100).unwrap();
        assert!(a.patterns().iter().zip(c.patterns()).any(|(x, y)| x.strand_a != y.strand_a));
    }

    #[test]
    fn deterministic_extremes() {
        let ones = SiteRates::shared(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3).unwrap();
        for p in simulate_dataset(&ones, 20, 1).unwrap().patterns() {
            assert!(p.strand_a.iter().all(|&x| x) && p.strand_b.iter().all(|&x| x));
        }
        let zeros = SiteRates::shared(0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 3).unwrap();
        for p in simulate_dataset(&zeros, 20, 2).unwrap().patterns() {
            assert!(p.strand_a.iter().all(|&x| !x) && p.strand_b.iter().all(|&x| !x));
        }
    }

    #[test]
    fn strand_order_is_randomized() {
        // Strongly asymmetric de novo rates: the parent strand is much more
        // methylated, yet should come first only about half the time.
        let rates = SiteRates::shared(0.95, 0.9, 0.05, 0.3, 0.0, 0.0, 8).unwrap();
        let data = simulate_dataset(&rates, 4000, 7).unwrap();
        let mut first_heavier = 0usize;
        let mut unequal = 0usize;
        for p in data.patterns() {
            let na = p.strand_a.iter().filter(|&&x| x).count();
            let nb = p.strand_b.iter().filter(|&&x| x).count();
            if na != nb {
                unequal += 1;
                if na > nb {
                    first_heavier += 1;
                }
            }
        }
        let frac = first_heavier as f64 / unequal as f64;
        assert!((frac - 0.5).abs() < 0.05, "first-heavier fraction {frac}");
    }

    #[test]
    fn empirical_frequencies_match_pattern_loglik() {
        let rates = SiteRates::shared(0.9, 0.15, 0.1, 0.6, 0.01, 0.03, 1).unwrap();
        let n = 100_000;
        let data = simulate_dataset(&rates, n, 13).unwrap();
        let mut counts = [0usize; 3]; // both, hemi, neither
        for p in data.patterns() {
            match (p.strand_a[0], p.strand_b[0]) {
                (true, true) => counts[0] += 1,
                (false, false) => counts[2] += 1,
                _ => counts[1] += 1,
            }
        }
        let classes = [
            MethylationPattern::new(vec![true], vec![true], "mm").unwrap(),
            MethylationPattern::new(vec![true], vec![false], "hm").unwrap(),
            MethylationPattern::new(vec![false], vec![false], "uu").unwrap(),
        ];
        for (k, class) in classes.iter().enumerate() {
            let expected = math::exp(pattern_loglik(class, &rates, true).unwrap());
            let observed = counts[k] as f64 / n as f64;
            let se = math::sqrt(expected * (1.0 - expected) / n as f64);
            assert!(
                (observed - expected).abs() < 4.0 * se,
                "class {k}: observed {observed} expected {expected}"
            );
        }
    }

    #[test]
    fn stationary_start_stays_put() {
        let rates = SiteRates::shared(0.976, 0.08, 0.07, 0.0, 0.0, 0.0, 1).unwrap();
        let target = stationary_density(0.976, 0.08, 0.07).unwrap();
        let traj = iterate_generations(&[target], &rates, 20, 20_000, 5).unwrap();
        let se = math::sqrt(target * (1.0 - target) / 20_000.0);
        for (t, row) in traj.iter().enumerate() {
            assert!((row[0] - target).abs() < 4.0 * se, "generation {t}: {}", row[0]);
        }
    }

    #[test]
    fn density_rises_from_zero_along_exact_recursion() {
        let (mu, dp, dd) = (0.9, 0.2, 0.15);
        let rates = SiteRates::shared(mu, dp, dd, 0.0, 0.0, 0.0, 1).unwrap();
        let pop = 40_000;
        let traj = iterate_generations(&[0.0], &rates, 12, pop, 17).unwrap();
        let mut expected = 0.0;
        let mut prev = -1.0;
        for (t, row) in traj.iter().enumerate() {
            let se = math::sqrt((expected * (1.0 - expected) / pop as f64).max(1e-12));
            assert!((row[0] - expected).abs() < 5.0 * se + 1e-9, "gen {t}: {} vs {expected}", row[0]);
            assert!(expected >= prev, "expected density must be nondecreasing");
            prev = expected;
            expected = expected_density_step(expected, mu, dp, dd);
        }
    }

    #[test]
    fn no_de_novo_decays_geometrically() {
        let mu = 0.8;
        let rates = SiteRates::shared(mu, 0.0, 0.0, 0.0, 0.0, 0.0, 1).unwrap();
        let pop = 50_000;
        let m0 = 0.9;
        let traj = iterate_generations(&[m0], &rates, 10, pop, 23).unwrap();
        // With both strands persisting, density decays by (1 + mu)/2 each
        // generation.
        let factor = (1.0 + mu) / 2.0;
        let mut expected = m0;
        for (t, row) in traj.iter().enumerate() {
            let se = math::sqrt((expected * (1.0 - expected) / pop as f64).max(1e-12));
            assert!((row[0] - expected).abs() < 5.0 * se + 1e-9, "gen {t}: {} vs {expected}", row[0]);
            expected *= factor;
        }
    }

    #[test]
    fn stationary_density_is_recursion_fixed_point() {
        for &(mu, dp, dd) in &[(0.976, 0.08, 0.07), (0.5, 0.1, 0.3), (0.9, 0.01, 0.02)] {
            let m = stationary_density(mu, dp, dd).unwrap();
            assert!((expected_density_step(m, mu, dp, dd) - m).abs() < 1e-12);
        }
    }

    #[test]
    fn hierarchy_draws_are_valid_and_deterministic() {
        let hp = HyperParams {
            mu: BetaRg { r: 0.976, g: 0.001 },
            delta_p: BetaRg { r: 0.08, g: 0.003 },
            delta_d: BetaRg { r: 0.07, g: 0.003 },
            b: BetaRg { r: 0.5, g: 0.01 },
            c: BetaRg { r: 0.016, g: 0.001 },
            g_m: 0.01,
            b_mode: BMode::Fixed(0.003),
        };
        let mut rng = Rng::new(40);
        let rates = draw_site_rates(&hp, 22, &mut rng).unwrap();
        assert_eq!(rates.n_sites(), 22);
        assert!(rates.b.iter().all(|&b| b == 0.003));
        let mut rng2 = Rng::new(40);
        let again = draw_site_rates(&hp, 22, &mut rng2).unwrap();
        assert_eq!(rates, again);
        // Sites scatter around the family means.
        let mean_mu = rates.mu.iter().sum::<f64>() / 22.0;
        assert!((mean_mu - 0.976).abs() < 0.05, "mean mu {mean_mu}");
    }
}
