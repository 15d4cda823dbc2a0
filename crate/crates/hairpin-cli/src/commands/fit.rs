//! `hairpin fit`: run MCMC chains against a dataset (or the prior alone),
//! writing one sample CSV per chain and a JSON run manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use hairpin_core::mcmc::{run_chain, run_prior_chain, ChainConfig, ChainRun, Init};
use hairpin_core::model::BMode;
use hairpin_core::Dataset;

use super::{b_mode_from_config, out_dir};
use crate::config::Config;
use crate::dataset_io::parse_dataset;
use crate::error::{CliError, Result};
use crate::io_util::atomic_write;
use crate::samples_io::write_samples;

const FIT_KEYS: [&str; 17] = [
    "seed",
    "out",
    "threads",
    "data",
    "iterations",
    "burn_in",
    "thin",
    "chains",
    "with_error",
    "b_mode",
    "b_fixed",
    "target_accept",
    "adapt",
    "randomized_scan",
    "audit_every",
    "prior_only",
    "sites",
];

#[derive(Serialize)]
struct AcceptanceEntry {
    proposals: u64,
    accepts: u64,
    rate: f64,
    burnin_proposals: u64,
    burnin_accepts: u64,
}

#[derive(Serialize)]
struct ChainEntry {
    chain: u32,
    file: String,
    draws: usize,
    final_logpost: Option<f64>,
    acceptance: BTreeMap<String, AcceptanceEntry>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    n_chains: usize,
    iterations: usize,
    burn_in_fraction: f64,
    thin: usize,
    with_error: bool,
    b_mode: String,
    prior_only: bool,
    n_sites: usize,
    n_patterns: Option<usize>,
    config: &'a BTreeMap<String, String>,
    chains: Vec<ChainEntry>,
    wall_clock_seconds: f64,
}

pub fn chain_config(cfg: &Config) -> Result<ChainConfig> {
    let defaults = ChainConfig::default();
    Ok(ChainConfig {
        n_iterations: cfg.get_or("iterations", defaults.n_iterations)?,
        burn_in_fraction: cfg.get_or("burn_in", defaults.burn_in_fraction)?,
        thin: cfg.get_or("thin", defaults.thin)?,
        seed: cfg.get_or("seed", defaults.seed)?,
        n_chains: cfg.get_or("chains", defaults.n_chains)?,
        adapt_during_burnin: cfg.get_bool_or("adapt", true)?,
        with_error: cfg.get_bool_or("with_error", true)?,
        b_mode: b_mode_from_config(cfg)?,
        target_accept: cfg.get_or("target_accept", defaults.target_accept)?,
        randomized_scan: cfg.get_bool_or("randomized_scan", false)?,
        audit_every: cfg.get_or("audit_every", defaults.audit_every)?,
        prior_only: cfg.get_bool_or("prior_only", false)?,
    })
}

/// Run the chains of one fit, `threads`-wide. Chain outputs depend only on
/// the chain id and config, so scheduling cannot change results.
pub fn run_all_chains(
    data: Option<&Dataset>,
    n_sites: usize,
    chain_cfg: &ChainConfig,
    threads: usize,
) -> Result<Vec<ChainRun>> {
    let n_chains = chain_cfg.n_chains;
    let workers = threads.max(1).min(n_chains);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<std::result::Result<ChainRun, hairpin_core::Error>>>> =
        Mutex::new((0..n_chains).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= n_chains {
                    break;
                }
                let run = match data {
                    Some(d) => run_chain(d, chain_cfg, Init::Random, c as u32),
                    None => run_prior_chain(n_sites, chain_cfg, Init::Random, c as u32),
                };
                results.lock().unwrap()[c] = Some(run);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("worker pool covered every chain").map_err(CliError::from))
        .collect()
}

pub fn run(cfg: &Config) -> Result<()> {
    cfg.validate_keys(&FIT_KEYS, &[])?;
    let chain_cfg = chain_config(cfg)?;
    let prior_only = chain_cfg.prior_only;
    let data: Option<Dataset> = if prior_only {
        None
    } else {
        let path = cfg
            .opt_str("data")
            .ok_or_else(|| CliError::config("missing required config keys: data (or set prior_only)"))?;
        Some(parse_dataset(&PathBuf::from(path))?)
    };
    let n_sites = match &data {
        Some(d) => d.n_sites(),
        None => cfg.get("sites").map_err(|_| {
            CliError::config("prior-only fits need 'sites' to size the rate vectors")
        })?,
    };
    let threads = cfg.get_or("threads", 0)?;
    let threads = if threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        threads
    };

    let started = Instant::now();
    let runs = run_all_chains(data.as_ref(), n_sites, &chain_cfg, threads)?;
    let dir = out_dir(cfg);
    let mut chains = Vec::new();
    for run in &runs {
        let file = format!("chain_{}.csv", run.chain_id);
        write_samples(&dir.join(&file), &run.samples)?;
        let n = run.samples.n_draws();
        let final_logpost = if n > 0 {
            let row = run.samples.row(n - 1);
            let v = row[row.len() - 1];
            v.is_finite().then_some(v)
        } else {
            None
        };
        let acceptance = run
            .acceptance
            .iter()
            .map(|a| {
                (
                    a.name.clone(),
                    AcceptanceEntry {
                        proposals: a.proposals,
                        accepts: a.accepts,
                        rate: if a.proposals > 0 { a.accepts as f64 / a.proposals as f64 } else { 0.0 },
                        burnin_proposals: a.proposals_burnin,
                        burnin_accepts: a.accepts_burnin,
                    },
                )
            })
            .collect();
        chains.push(ChainEntry { chain: run.chain_id, file, draws: n, final_logpost, acceptance });
    }
    let manifest = Manifest {
        command: "fit",
        seed: chain_cfg.seed,
        n_chains: chain_cfg.n_chains,
        iterations: chain_cfg.n_iterations,
        burn_in_fraction: chain_cfg.burn_in_fraction,
        thin: chain_cfg.thin,
        with_error: chain_cfg.with_error,
        b_mode: match chain_cfg.b_mode {
            BMode::Fixed(v) => format!("fixed({v})"),
            BMode::Hierarchical => "hierarchical".to_string(),
        },
        prior_only,
        n_sites,
        n_patterns: data.as_ref().map(|d| d.n_patterns()),
        config: cfg.entries(),
        chains,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::numerical(format!("manifest encoding failed: {e}")))?;
    atomic_write(&dir.join("manifest.json"), json.as_bytes())?;
    eprintln!(
        "fit: {} chains x {} iterations -> {}",
        chain_cfg.n_chains,
        chain_cfg.n_iterations,
        dir.display()
    );
    Ok(())
}
