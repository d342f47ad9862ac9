//! Artifact writers: gaps.csv / pulls.csv with fixed headers and 10
//! significant-digit floats, plus a machine-readable run manifest.

use super::config::ExperimentConfig;
use super::{AggregateResult, GapRow, PullRow};
use crate::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const GAPS_HEADER: &str = "T,algorithm,iteration,mean_gap,std_err,realizations";
pub const PULLS_HEADER: &str = "T,iteration,oracle,mean_pulls";

/// 10 significant digits, exponent form; the one float rendering used in
/// every emitted artifact.
pub fn format_float(v: f64) -> String {
    format!("{v:.9e}")
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn render_gaps(rows: &[GapRow]) -> String {
    let mut sorted: Vec<&GapRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.trials, &a.algorithm, a.iteration).cmp(&(b.trials, &b.algorithm, b.iteration))
    });
    let mut out = String::from(GAPS_HEADER);
    out.push('\n');
    for row in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.trials,
            row.algorithm,
            row.iteration,
            format_float(row.mean_gap),
            format_float(row.std_err),
            row.realizations
        )
        .expect("string write");
    }
    out
}

fn render_pulls(rows: &[PullRow]) -> String {
    let mut sorted: Vec<&PullRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.trials, r.iteration, r.oracle));
    let mut out = String::from(PULLS_HEADER);
    out.push('\n');
    for row in sorted {
        writeln!(
            out,
            "{},{},{},{}",
            row.trials,
            row.iteration,
            row.oracle,
            format_float(row.mean_pulls)
        )
        .expect("string write");
    }
    out
}

/// Writes gaps.csv and pulls.csv under `dir`, atomically, rows sorted by
/// (T, algorithm, iteration) and (T, iteration, oracle).
pub fn emit_csv(result: &AggregateResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let gaps_path = dir.join("gaps.csv");
    let pulls_path = dir.join("pulls.csv");
    write_atomic(&gaps_path, &render_gaps(&result.gaps))?;
    write_atomic(&pulls_path, &render_pulls(&result.pulls))?;
    Ok((gaps_path, pulls_path))
}

#[derive(Serialize)]
struct Generator {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    generator: Generator,
    config_sha256: String,
    base_seed: u64,
    trials_t: &'a [u32],
    realizations: u32,
    threads: usize,
    wall_time_secs: f64,
    gaps: &'a [GapRow],
    pulls: &'a [PullRow],
    pseudo_regret: &'a [super::RegretRow],
}

/// Writes summary.json: config hash, seed, versions, wall time, and the
/// aggregate rows mirroring the CSVs. Timing aside, identical runs
/// produce identical manifests.
pub fn write_summary(
    result: &AggregateResult,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let canonical = config.canonical_toml()?;
    let digest = Sha256::digest(canonical.as_bytes());
    let mut config_sha256 = String::with_capacity(64);
    for byte in digest {
        write!(config_sha256, "{byte:02x}").expect("string write");
    }
    let manifest = Manifest {
        schema_version: 1,
        generator: Generator {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        config_sha256,
        base_seed: config.base_seed,
        trials_t: &config.trials_t,
        realizations: config.realizations,
        threads: result.threads,
        wall_time_secs: result.wall_time_secs,
        gaps: &result.gaps,
        pulls: &result.pulls,
        pseudo_regret: &result.pseudo_regret,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    text.push('\n');
    let path = dir.join("summary.json");
    write_atomic(&path, &text)?;
    Ok(path)
}
