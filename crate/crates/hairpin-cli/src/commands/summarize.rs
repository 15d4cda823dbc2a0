//! `hairpin summarize`: pool chain CSVs and emit the summary JSON, scatter
//! CSVs, per-site interval CSVs, and (optionally) SVG plots.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use hairpin_core::posterior::{
    credible_interval, family_summary, quantile_type7, scatter_xy, split_rhat, Family,
    PosteriorSamples, Scatter,
};

use super::out_dir;
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::io_util::atomic_write;
use crate::samples_io::read_samples;

const SUMMARIZE_KEYS: [&str; 7] = ["seed", "out", "threads", "data", "samples", "coverage", "svg"];

#[derive(Serialize)]
struct Interval {
    lo: f64,
    median: f64,
    hi: f64,
}

impl From<(f64, f64, f64)> for Interval {
    fn from((lo, median, hi): (f64, f64, f64)) -> Self {
        Interval { lo, median, hi }
    }
}

#[derive(Serialize)]
struct FamilyJson {
    r: Option<Interval>,
    median_rate: Interval,
    log10_g: Interval,
    label: &'static str,
}

#[derive(Serialize)]
struct ScatterJson {
    x: &'static str,
    y: &'static str,
    correlation: f64,
    slope: f64,
    intercept: f64,
    file: &'static str,
}

#[derive(Serialize)]
struct SummaryJson {
    command: &'static str,
    n_draws: usize,
    n_chains: usize,
    coverage: f64,
    families: BTreeMap<&'static str, FamilyJson>,
    one_minus_r_mu: Interval,
    scatters: Vec<ScatterJson>,
    split_rhat: BTreeMap<&'static str, f64>,
}

fn scatter_csv(header: (&str, &str), s: &Scatter) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, y) in s.xs.iter().zip(&s.ys) {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

fn per_site_csv(samples: &PosteriorSamples, prefix: &str, transform: impl Fn(f64) -> f64) -> Result<String> {
    let mut out = String::from("site,p10,p50,p90\n");
    let mut site = 1usize;
    loop {
        let name = format!("{prefix}.{site}");
        let Ok(col) = samples.column(&name) else { break };
        let values: Vec<f64> = col.into_iter().map(&transform).collect();
        let (lo, med, hi) = credible_interval(&values, 0.8).map_err(CliError::from)?;
        out.push_str(&format!("{site},{lo},{med},{hi}\n"));
        site += 1;
    }
    if site == 1 {
        return Err(CliError::data(format!("no '{prefix}.*' columns in samples")));
    }
    Ok(out)
}

/// Per-draw median across a family's site columns.
fn cross_site_median(samples: &PosteriorSamples, prefix: &str) -> Result<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut site = 1usize;
    loop {
        let name = format!("{prefix}.{site}");
        match samples.column(&name) {
            Ok(col) => cols.push(col),
            Err(_) => break,
        }
        site += 1;
    }
    if cols.is_empty() {
        return Err(CliError::data(format!("no '{prefix}.*' columns in samples")));
    }
    let n = cols[0].len();
    let mut medians = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(cols.len());
    for i in 0..n {
        scratch.clear();
        scratch.extend(cols.iter().map(|c| c[i]));
        scratch.sort_unstable_by(f64::total_cmp);
        medians.push(quantile_type7(&scratch, 0.5));
    }
    Ok(medians)
}

pub fn load_pooled(paths: &[PathBuf]) -> Result<PosteriorSamples> {
    if paths.is_empty() {
        return Err(CliError::config("no sample files given"));
    }
    let mut parts = Vec::new();
    for (k, path) in paths.iter().enumerate() {
        parts.push(read_samples(path, k as u32)?);
    }
    PosteriorSamples::pool(parts).map_err(CliError::from)
}

pub fn run(cfg: &Config, sample_args: &[PathBuf], svg_flag: bool) -> Result<()> {
    cfg.validate_keys(&SUMMARIZE_KEYS, &[])?;
    let coverage: f64 = cfg.get_or("coverage", 0.8)?;
    let svg = svg_flag || cfg.get_bool_or("svg", false)?;
    let paths: Vec<PathBuf> = if !sample_args.is_empty() {
        sample_args.to_vec()
    } else if let Some(list) = cfg.opt_str("samples") {
        list.split(',').map(|s| PathBuf::from(s.trim())).collect()
    } else {
        return Err(CliError::config("missing required config keys: samples (or pass CSV paths)"));
    };
    let pooled = load_pooled(&paths)?;
    let dir = out_dir(cfg);

    let mut families = BTreeMap::new();
    for (family, key) in [
        (Family::Mu, "mu"),
        (Family::DeltaP, "dp"),
        (Family::DeltaD, "dd"),
        (Family::C, "c"),
        (Family::M, "m"),
    ] {
        let s = family_summary(&pooled, family, coverage).map_err(CliError::from)?;
        families.insert(
            key,
            FamilyJson {
                r: s.r.map(Interval::from),
                median_rate: s.median_rate.into(),
                log10_g: s.log10_g.into(),
                label: s.label,
            },
        );
    }

    let one_minus: Vec<f64> = pooled.column("r_mu").map_err(CliError::from)?.iter().map(|x| 1.0 - x).collect();
    let one_minus_ci = credible_interval(&one_minus, coverage).map_err(CliError::from)?;

    // Scatter data for the ridge plots.
    let r_c = pooled.column("r_c").map_err(CliError::from)?;
    let ridge = scatter_xy(r_c.clone(), one_minus.clone()).map_err(CliError::from)?;
    atomic_write(
        &dir.join("scatter_c_vs_failure.csv"),
        scatter_csv(("r_c", "one_minus_r_mu"), &ridge).as_bytes(),
    )?;

    let dp_med = cross_site_median(&pooled, "dp")?;
    let dd_med = cross_site_median(&pooled, "dd")?;
    let denovo = scatter_xy(dp_med.clone(), dd_med.clone()).map_err(CliError::from)?;
    atomic_write(&dir.join("scatter_denovo.csv"), scatter_csv(("dp_median", "dd_median"), &denovo).as_bytes())?;

    let c_med = cross_site_median(&pooled, "c")?;
    let avg_denovo: Vec<f64> = dp_med.iter().zip(&dd_med).map(|(p, d)| (p + d) / 2.0).collect();
    let c_denovo = scatter_xy(c_med, avg_denovo).map_err(CliError::from)?;
    atomic_write(
        &dir.join("scatter_c_vs_denovo.csv"),
        scatter_csv(("c_median", "avg_de_novo_median"), &c_denovo).as_bytes(),
    )?;

    // Per-site interval tables (failure of maintenance and the de novo rates).
    atomic_write(&dir.join("sites_failure.csv"), per_site_csv(&pooled, "mu", |x| 1.0 - x)?.as_bytes())?;
    atomic_write(&dir.join("sites_dp.csv"), per_site_csv(&pooled, "dp", |x| x)?.as_bytes())?;
    atomic_write(&dir.join("sites_dd.csv"), per_site_csv(&pooled, "dd", |x| x)?.as_bytes())?;

    // Split-chain diagnostics on the sampled means (only meaningful with at
    // least two chains).
    let mut rhat = BTreeMap::new();
    if pooled.chains().len() >= 2 {
        for name in ["r_mu", "r_dp", "r_dd", "r_c"] {
            let chains: Vec<Vec<f64>> = pooled
                .chains()
                .iter()
                .map(|&c| pooled.chain_column(name, c))
                .collect::<std::result::Result<_, _>>()
                .map_err(CliError::from)?;
            let r = split_rhat(&chains);
            if r.is_finite() {
                rhat.insert(
                    match name {
                        "r_mu" => "r_mu",
                        "r_dp" => "r_dp",
                        "r_dd" => "r_dd",
                        _ => "r_c",
                    },
                    r,
                );
            }
        }
    }

    if svg {
        atomic_write(&dir.join("hist_r_c.svg"), crate::svg::histogram(&r_c, 40, "r_c").as_bytes())?;
        atomic_write(
            &dir.join("scatter_c_vs_failure.svg"),
            crate::svg::scatter(
                &ridge.xs,
                &ridge.ys,
                Some((ridge.intercept, ridge.slope)),
                "r_c",
                "1 - r_mu",
            )
            .as_bytes(),
        )?;
    }

    let summary = SummaryJson {
        command: "summarize",
        n_draws: pooled.n_draws(),
        n_chains: pooled.chains().len(),
        coverage,
        families,
        one_minus_r_mu: one_minus_ci.into(),
        scatters: vec![
            ScatterJson {
                x: "r_c",
                y: "one_minus_r_mu",
                correlation: ridge.correlation,
                slope: ridge.slope,
                intercept: ridge.intercept,
                file: "scatter_c_vs_failure.csv",
            },
            ScatterJson {
                x: "dp_median",
                y: "dd_median",
                correlation: denovo.correlation,
                slope: denovo.slope,
                intercept: denovo.intercept,
                file: "scatter_denovo.csv",
            },
            ScatterJson {
                x: "c_median",
                y: "avg_de_novo_median",
                correlation: c_denovo.correlation,
                slope: c_denovo.slope,
                intercept: c_denovo.intercept,
                file: "scatter_c_vs_denovo.csv",
            },
        ],
        split_rhat: rhat,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::numerical(format!("summary encoding failed: {e}")))?;
    atomic_write(&dir.join("summary.json"), json.as_bytes())?;
    eprintln!("summary of {} draws -> {}", pooled.n_draws(), dir.display());
    Ok(())
}
