//! Per-site rate tables as CSV: `site,mu,delta_p,delta_d,m,b,c` with a
//! 1-based site index. Used for simulation truth sidecars and `loglik` input.

use std::path::Path;

use hairpin_core::SiteRates;

use crate::error::{CliError, Result};
use crate::io_util::atomic_write;

pub const RATES_HEADER: &str = "site,mu,delta_p,delta_d,m,b,c";

pub fn rates_to_csv(rates: &SiteRates) -> String {
    let mut out = String::from(RATES_HEADER);
    out.push('\n');
    for j in 0..rates.n_sites() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            j + 1,
            rates.mu[j],
            rates.delta_p[j],
            rates.delta_d[j],
            rates.m[j],
            rates.b[j],
            rates.c[j]
        ));
    }
    out
}

pub fn write_rates(path: &Path, rates: &SiteRates) -> Result<()> {
    atomic_write(path, rates_to_csv(rates).as_bytes())
}

pub fn parse_rates_csv(text: &str, source: &str) -> Result<SiteRates> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() || l.trim_start().starts_with('#') => continue,
            Some((_, l)) => break l.trim(),
            None => return Err(CliError::data(format!("{source}: empty rates file"))),
        }
    };
    if header != RATES_HEADER {
        return Err(CliError::data(format!(
            "{source}: expected header '{RATES_HEADER}', got '{header}'"
        )));
    }
    let (mut mu, mut dp, mut dd, mut m, mut b, mut c) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::data(format!("{source} line {}: expected 7 fields", idx + 1)));
        }
        let parse = |k: usize| -> Result<f64> {
            fields[k]
                .trim()
                .parse()
                .map_err(|_| CliError::data(format!("{source} line {}: bad number '{}'", idx + 1, fields[k])))
        };
        let site: f64 = parse(0)?;
        if site as usize != mu.len() + 1 {
            return Err(CliError::data(format!(
                "{source} line {}: site index {} out of order (expected {})",
                idx + 1,
                site,
                mu.len() + 1
            )));
        }
        mu.push(parse(1)?);
        dp.push(parse(2)?);
        dd.push(parse(3)?);
        m.push(parse(4)?);
        b.push(parse(5)?);
        c.push(parse(6)?);
    }
    SiteRates::new(mu, dp, dd, m, b, c).map_err(|e| CliError::data(format!("{source}: {e}")))
}

pub fn read_rates(path: &Path) -> Result<SiteRates> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read rates {}: {e}", path.display())))?;
    parse_rates_csv(&text, &path.display().to_string())
}
