//! `hairpin simulate`: write a synthetic dataset, the generating per-site
//! rates, and a metadata sidecar.

use std::collections::BTreeMap;

use serde::Serialize;

use hairpin_core::rng::Rng;
use hairpin_core::simulator::{draw_site_rates, simulate_dataset};

use super::{hyperparams_from_config, out_dir, rates_from_config, HYPER_KEYS, RATE_KEYS};
use crate::config::Config;
use crate::dataset_io::write_dataset;
use crate::error::{CliError, Result};
use crate::io_util::atomic_write;
use crate::rates_io::write_rates;

#[derive(Serialize)]
struct SimulateMeta<'a> {
    command: &'static str,
    mode: &'a str,
    seed: u64,
    n_patterns: usize,
    n_sites: usize,
    dataset_file: &'static str,
    truth_file: &'static str,
    config: &'a BTreeMap<String, String>,
}

pub fn run(cfg: &Config) -> Result<()> {
    let mut allowed: Vec<&str> = vec!["patterns", "mode", "b_fixed"];
    allowed.extend(super::GLOBAL_KEYS);
    allowed.extend(RATE_KEYS);
    allowed.extend(HYPER_KEYS);
    cfg.validate_keys(&allowed, &["patterns"])?;

    let n_patterns: usize = cfg.get("patterns")?;
    if n_patterns == 0 {
        return Err(CliError::config("patterns must be >= 1"));
    }
    let seed: u64 = cfg.get_or("seed", 0)?;
    let mode = cfg.opt_str("mode").unwrap_or("rates");
    let rates = match mode {
        "rates" => {
            let sites: usize = if cfg.contains("rates_file") { cfg.get_or("sites", 0)? } else { cfg.get("sites")? };
            rates_from_config(cfg, sites)?
        }
        "hierarchy" => {
            let sites: usize = cfg.get("sites")?;
            let hp = hyperparams_from_config(cfg)?;
            // High-bit stream id keeps the rate draw disjoint from the
            // per-pattern substreams, which use small indices.
            let mut rng = Rng::substream(seed, (1 << 62) | 0x5172);
            draw_site_rates(&hp, sites, &mut rng).map_err(CliError::from)?
        }
        other => return Err(CliError::config(format!("mode must be 'rates' or 'hierarchy', got '{other}'"))),
    };
    let data = simulate_dataset(&rates, n_patterns, seed).map_err(CliError::from)?;

    let dir = out_dir(cfg);
    write_dataset(&dir.join("dataset.txt"), &data)?;
    write_rates(&dir.join("truth.csv"), &rates)?;
    let meta = SimulateMeta {
        command: "simulate",
        mode,
        seed,
        n_patterns,
        n_sites: rates.n_sites(),
        dataset_file: "dataset.txt",
        truth_file: "truth.csv",
        config: cfg.entries(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::numerical(format!("meta encoding failed: {e}")))?;
    atomic_write(&dir.join("meta.json"), json.as_bytes())?;
    eprintln!(
        "simulated {} patterns x {} sites -> {}",
        data.n_patterns(),
        data.n_sites(),
        dir.display()
    );
    Ok(())
}
