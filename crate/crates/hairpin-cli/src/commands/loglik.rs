//! `hairpin loglik`: print the dataset log-likelihood at given rates.

use std::path::PathBuf;

use hairpin_core::likelihood::dataset_loglik;

use super::{rates_from_config, RATE_KEYS};
use crate::config::Config;
use crate::error::{CliError, Result};

pub fn run(cfg: &Config) -> Result<()> {
    let mut allowed: Vec<&str> = vec!["with_error"];
    allowed.extend(super::GLOBAL_KEYS);
    allowed.extend(RATE_KEYS);
    cfg.validate_keys(&allowed, &["data"])?;
    let data = crate::dataset_io::parse_dataset(&PathBuf::from(cfg.get_str("data")?))?;
    let rates = rates_from_config(cfg, data.n_sites())?;
    if rates.n_sites() != data.n_sites() {
        return Err(CliError::data(format!(
            "rates cover {} sites but dataset has {}",
            rates.n_sites(),
            data.n_sites()
        )));
    }
    let with_error = cfg.get_bool_or("with_error", true)?;
    let ll = dataset_loglik(&data, &rates, with_error).map_err(CliError::from)?;
    println!("{ll}");
    Ok(())
}
