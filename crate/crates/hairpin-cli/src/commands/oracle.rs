//! `hairpin oracle`: run the independent verification engines and write a
//! JSON report (plus CSVs for the moment family and EM trace).

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use hairpin_core::likelihood::pattern_loglik;
use hairpin_core::math;
use hairpin_core::model::MethylationPattern;
use hairpin_core::oracle::em::{em_fit, EmPins};
use hairpin_core::oracle::{brute_force_pattern_prob, expected_dyad_fractions, moment_fit};
use hairpin_core::rng::Rng;
use hairpin_core::simulator::simulate_dataset;
use hairpin_core::SiteRates;

use super::out_dir;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::io_util::atomic_write;

const ORACLE_KEYS: [&str; 13] = [
    "seed",
    "out",
    "threads",
    "data",
    "checks",
    "instances",
    "max_sites",
    "p_m",
    "p_h",
    "p_u",
    "b",
    "c_max",
    "c_steps",
];

#[derive(Serialize)]
struct BruteReport {
    instances: usize,
    max_sites: usize,
    max_relative_discrepancy: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct DyadReport {
    max_sum_deviation: f64,
    simulation_patterns: usize,
    max_simulation_sigma: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MomentReport {
    observed: (f64, f64, f64),
    b: f64,
    feasible_points: usize,
    grid_points: usize,
    line_slope: Option<f64>,
    line_intercept: Option<f64>,
    line_correlation: Option<f64>,
    file: &'static str,
}

#[derive(Serialize)]
struct EmReport {
    data: String,
    with_error: bool,
    iterations: usize,
    converged: bool,
    monotone: bool,
    loglik: f64,
    estimates: BTreeMap<&'static str, f64>,
    file: &'static str,
}

#[derive(Serialize, Default)]
struct OracleReport {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute: Option<BruteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dyad: Option<DyadReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    moment: Option<MomentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    em: Option<EmReport>,
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
    .expect("interior draws are valid rates")
}

/// Brute-force versus factorized likelihood on random instances; returns the
/// worst relative discrepancy.
pub fn brute_force_check(instances: usize, max_sites: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::substream(seed, 0x0b);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let s = 1 + rng.index(max_sites);
        let rates = random_rates(&mut rng, s);
        let pat = MethylationPattern::new(
            (0..s).map(|_| rng.bernoulli(0.5)).collect(),
            (0..s).map(|_| rng.bernoulli(0.5)).collect(),
            "oracle",
        )
        .map_err(CliError::from)?;
        for with_error in [false, true] {
            let brute = brute_force_pattern_prob(&pat, &rates, with_error).map_err(CliError::from)?;
            let fast = math::exp(pattern_loglik(&pat, &rates, with_error).map_err(CliError::from)?);
            worst = worst.max((brute - fast).abs() / brute.abs().max(1e-300));
        }
    }
    Ok(worst)
}

pub fn run(cfg: &Config) -> Result<()> {
    cfg.validate_keys(&ORACLE_KEYS, &[])?;
    let checks: Vec<&str> = cfg.opt_str("checks").unwrap_or("brute,dyad,moment").split(',').map(str::trim).collect();
    let seed: u64 = cfg.get_or("seed", 0)?;
    let dir = out_dir(cfg);
    let mut report = OracleReport { command: "oracle", ..OracleReport::default() };

    if checks.contains(&"brute") {
        let instances: usize = cfg.get_or("instances", 300)?;
        let max_sites: usize = cfg.get_or("max_sites", 4)?;
        let worst = brute_force_check(instances, max_sites, seed)?;
        report.brute = Some(BruteReport {
            instances,
            max_sites,
            max_relative_discrepancy: worst,
            tolerance: 1e-12,
            pass: worst < 1e-12,
        });
    }

    if checks.contains(&"dyad") {
        let mut rng = Rng::substream(seed, 0xd1ad);
        let mut worst_sum = 0.0f64;
        for _ in 0..200 {
            let (p_m, p_h, p_u) = expected_dyad_fractions(
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
                rng.uniform(),
            );
            worst_sum = worst_sum.max((p_m + p_h + p_u - 1.0).abs());
        }
        // Simulation cross-check at near-published rates.
        let (mu, dp, dd) = (0.976, 0.08, 0.07);
        let m = hairpin_core::hierarchy::stationary_density(mu, dp, dd).map_err(CliError::from)?;
        let rates = SiteRates::shared(mu, dp, dd, m, 0.003, 0.016, 4).map_err(CliError::from)?;
        let n = 20_000usize;
        let data = simulate_dataset(&rates, n, seed ^ 0x51).map_err(CliError::from)?;
        let expected = expected_dyad_fractions(mu, dp, dd, m, 0.003, 0.016);
        let observed = data.dyad_fractions();
        let dyads = (n * 4) as f64;
        let mut max_sigma = 0.0f64;
        for (obs, exp) in [(observed.0, expected.0), (observed.1, expected.1), (observed.2, expected.2)] {
            let se = math::sqrt(exp * (1.0 - exp) / dyads);
            max_sigma = max_sigma.max((obs - exp).abs() / se);
        }
        report.dyad = Some(DyadReport {
            max_sum_deviation: worst_sum,
            simulation_patterns: n,
            max_simulation_sigma: max_sigma,
            pass: worst_sum < 1e-12 && max_sigma < 3.0,
        });
    }

    if checks.contains(&"moment") {
        let observed = (
            cfg.get_or("p_m", 0.82)?,
            cfg.get_or("p_h", 0.064)?,
            cfg.get_or("p_u", 0.116)?,
        );
        let b: f64 = cfg.get_or("b", 0.003)?;
        let c_max: f64 = cfg.get_or("c_max", 0.06)?;
        let c_steps: usize = cfg.get_or("c_steps", 13)?;
        let grid: Vec<f64> =
            (0..c_steps).map(|i| c_max * i as f64 / (c_steps.max(2) - 1) as f64).collect();
        let family = moment_fit(observed, b, &grid).map_err(CliError::from)?;
        let mut csv = String::from("c,feasible,one_minus_mu,total_de_novo\n");
        for p in &family {
            csv.push_str(&format!("{},{},{},{}\n", p.c, p.feasible, p.one_minus_mu, p.total_de_novo));
        }
        atomic_write(&dir.join("moment_family.csv"), csv.as_bytes())?;
        let feasible: Vec<_> = family.iter().filter(|p| p.feasible).collect();
        let line = if feasible.len() >= 2 {
            let xs: Vec<f64> = feasible.iter().map(|p| p.c).collect();
            let ys: Vec<f64> = feasible.iter().map(|p| p.one_minus_mu).collect();
            Some(hairpin_core::posterior::scatter_xy(xs, ys).map_err(CliError::from)?)
        } else {
            None
        };
        report.moment = Some(MomentReport {
            observed,
            b,
            feasible_points: feasible.len(),
            grid_points: family.len(),
            line_slope: line.as_ref().map(|l| l.slope),
            line_intercept: line.as_ref().map(|l| l.intercept),
            line_correlation: line.as_ref().map(|l| l.correlation),
            file: "moment_family.csv",
        });
    }

    if checks.contains(&"em") {
        let path = cfg
            .opt_str("data")
            .ok_or_else(|| CliError::config("the em check needs a 'data' path"))?;
        let data = crate::dataset_io::parse_dataset(&PathBuf::from(path))?;
        let b: f64 = cfg.get_or("b", 0.003)?;
        let fit = em_fit(&data, true, b, EmPins::default(), 20_000).map_err(CliError::from)?;
        let monotone = fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-10);
        let mut csv = String::from("iteration,loglik\n");
        for (i, ll) in fit.trace.iter().enumerate() {
            csv.push_str(&format!("{i},{ll}\n"));
        }
        atomic_write(&dir.join("em_trace.csv"), csv.as_bytes())?;
        let mut estimates = BTreeMap::new();
        estimates.insert("mu", fit.params.mu);
        estimates.insert("delta_p", fit.params.delta_p);
        estimates.insert("delta_d", fit.params.delta_d);
        estimates.insert("m", fit.params.m);
        estimates.insert("c", fit.params.c);
        estimates.insert("b", fit.params.b);
        report.em = Some(EmReport {
            data: path.to_string(),
            with_error: true,
            iterations: fit.iterations,
            converged: fit.converged,
            monotone,
            loglik: fit.loglik,
            estimates,
            file: "em_trace.csv",
        });
    }

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::numerical(format!("report encoding failed: {e}")))?;
    atomic_write(&dir.join("oracle_report.json"), json.as_bytes())?;
    eprintln!("oracle checks [{}] -> {}", checks.join(","), dir.display());
    Ok(())
}
