//! Subcommand implementations and the helpers they share.

pub mod fit;
pub mod loglik;
pub mod oracle;
pub mod simulate;
pub mod summarize;

use std::path::PathBuf;

use hairpin_core::hierarchy::{stationary_density, BetaRg};
use hairpin_core::model::{BMode, HyperParams};
use hairpin_core::SiteRates;

use crate::config::Config;
use crate::error::{CliError, Result};

/// Config keys shared by every command.
pub const GLOBAL_KEYS: [&str; 4] = ["seed", "out", "threads", "data"];

pub fn out_dir(cfg: &Config) -> PathBuf {
    PathBuf::from(cfg.opt_str("out").unwrap_or("out"))
}

/// Shared per-site rates from scalar config keys, defaulting `m` to the
/// stationary density, or a full per-site table from `rates_file`.
pub fn rates_from_config(cfg: &Config, n_sites: usize) -> Result<SiteRates> {
    if let Some(path) = cfg.opt_str("rates_file") {
        let rates = crate::rates_io::read_rates(&PathBuf::from(path))?;
        if rates.n_sites() != n_sites && n_sites != 0 {
            return Err(CliError::config(format!(
                "rates_file has {} sites but config says {n_sites}",
                rates.n_sites()
            )));
        }
        return Ok(rates);
    }
    let mu: f64 = cfg.get("mu")?;
    let dp: f64 = cfg.get("delta_p")?;
    let dd: f64 = cfg.get("delta_d")?;
    let b: f64 = cfg.get_or("b", 0.0)?;
    let c: f64 = cfg.get_or("c", 0.0)?;
    let m = cfg.opt::<f64>("m")?;
    for (key, value) in
        [("mu", mu), ("delta_p", dp), ("delta_d", dd), ("b", b), ("c", c), ("m", m.unwrap_or(0.0))]
    {
        if !(0.0..=1.0).contains(&value) {
            return Err(CliError::config(format!("rate '{key}' = {value} is outside [0, 1]")));
        }
    }
    let m = match m {
        Some(m) => m,
        None => stationary_density(mu, dp, dd)
            .map_err(|e| CliError::numerical(format!("cannot default m to stationarity: {e}")))?,
    };
    SiteRates::shared(mu, dp, dd, m, b, c, n_sites).map_err(CliError::from)
}

/// Keys a scalar/tabular rate specification may use.
pub const RATE_KEYS: [&str; 8] = ["mu", "delta_p", "delta_d", "m", "b", "c", "rates_file", "sites"];

fn beta_rg(cfg: &Config, r_key: &str, g_key: &str) -> Result<BetaRg> {
    let r: f64 = cfg.get(r_key)?;
    let log_g: f64 = cfg.get(g_key)?;
    BetaRg::new(r, 10f64.powf(log_g)).map_err(CliError::from)
}

/// Hyperparameters from `r_*`/`log10_g_*` config keys.
pub fn hyperparams_from_config(cfg: &Config) -> Result<HyperParams> {
    let b_mode = b_mode_from_config(cfg)?;
    let b = match b_mode {
        BMode::Hierarchical => beta_rg(cfg, "r_b", "log10_g_b")?,
        BMode::Fixed(_) => BetaRg::new(
            cfg.get_or("r_b", 0.5)?,
            10f64.powf(cfg.get_or("log10_g_b", -2.0)?),
        )
        .map_err(CliError::from)?,
    };
    Ok(HyperParams {
        mu: beta_rg(cfg, "r_mu", "log10_g_mu")?,
        delta_p: beta_rg(cfg, "r_dp", "log10_g_dp")?,
        delta_d: beta_rg(cfg, "r_dd", "log10_g_dd")?,
        b,
        c: beta_rg(cfg, "r_c", "log10_g_c")?,
        g_m: 10f64.powf(cfg.get::<f64>("log10_g_m")?),
        b_mode,
    })
}

pub const HYPER_KEYS: [&str; 12] = [
    "r_mu",
    "log10_g_mu",
    "r_dp",
    "log10_g_dp",
    "r_dd",
    "log10_g_dd",
    "r_b",
    "log10_g_b",
    "r_c",
    "log10_g_c",
    "log10_g_m",
    "b_mode",
];

pub fn b_mode_from_config(cfg: &Config) -> Result<BMode> {
    match cfg.opt_str("b_mode").unwrap_or("fixed") {
        "hierarchical" => Ok(BMode::Hierarchical),
        "fixed" => Ok(BMode::Fixed(cfg.get_or("b_fixed", 0.003)?)),
        other => Err(CliError::config(format!("b_mode must be 'fixed' or 'hierarchical', got '{other}'"))),
    }
}
