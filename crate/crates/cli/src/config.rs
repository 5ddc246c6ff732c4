//! Manifests for each subcommand.
//!
//! A config file is TOML with one table per subcommand (`[run]`, `[study]`,
//! `[reference]`, `[sweep]`) whose keys mirror the long flags, plus an
//! optional `[scenario]` table holding a full problem description. Flags
//! given on the command line win over the file.

use std::path::{Path, PathBuf};

use m1dg::diagnostics::FieldSampling;
use m1dg::limiters::{LimiterConfig, VALID_LABELS};
use m1dg::scenarios::{builtin, MeshSpec, ScenarioConfig, BUILTIN_NAMES};
use clap::Args;
use serde::Deserialize;

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "M1DG_OUTPUT";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Default, Clone, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Builtin scenario name
    #[arg(long)]
    pub scenario: Option<String>,
    /// rect, tri (four-way split), tri2 (two-way split) or file:<path>
    #[arg(long)]
    pub mesh: Option<String>,
    /// Polynomial degree (0, 1 or 2)
    #[arg(long)]
    pub k: Option<usize>,
    /// Limiter label such as CRL22, SL0, RL or none
    #[arg(long)]
    pub limiter: Option<String>,
    /// Mesh size
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Final time (or the time cap of a steady-state run)
    #[arg(long, allow_negative_numbers = true)]
    pub t_final: Option<f64>,
    /// CFL safety factor in (0, 1]
    #[arg(long, allow_negative_numbers = true)]
    pub cfl: Option<f64>,
    /// Number of equidistant output times
    #[arg(long)]
    pub samples: Option<usize>,
    /// Field CSV rows: cells, nodes or lattice:NXxNY
    #[arg(long)]
    pub sampling: Option<String>,
    /// Also write a VTK file per sample
    #[arg(long)]
    pub vtk: Option<bool>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Recorded in the summary; the solver itself draws no random numbers
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// Distance parameter of the test field, 0 <= xi <= 1
    #[arg(long, allow_negative_numbers = true)]
    pub xi: Option<f64>,
    /// Comma-separated degrees
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Comma-separated values of 1/h, ascending
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Builtin scenario name
    #[arg(long)]
    pub scenario: Option<String>,
    /// Cells along x
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Builtin scenario name
    #[arg(long)]
    pub scenario: Option<String>,
    /// rect, tri (four-way split), tri2 (two-way split) or file:<path>
    #[arg(long)]
    pub mesh: Option<String>,
    /// Polynomial degree (0, 1 or 2)
    #[arg(long)]
    pub k: Option<usize>,
    /// Label whose slope mode and realizability switch are swept over M, e.g. CRL0
    #[arg(long)]
    pub limiter: Option<String>,
    /// Mesh size
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Cells along x of the reference grid
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Fills every `None` in `flags` from `file`.
macro_rules! merge {
    ($flags:expr, $file:expr, $($key:ident),+) => {
        $( if $flags.$key.is_none() { $flags.$key = $file.$key.clone(); } )+
    };
}
pub(crate) use merge;

fn key_error(key: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {err}"))
}

/// Root for default output paths.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("output"))
}

/// Starting scenario: the `[scenario]` table when present, otherwise the
/// named builtin.
pub fn base_scenario(name: Option<&str>, file: Option<&ScenarioConfig>) -> Result<ScenarioConfig, CliError> {
    match (name, file) {
        (Some(n), _) => builtin(n).map_err(|_| {
            key_error("scenario", format!("unknown scenario `{n}`; builtins: {}", BUILTIN_NAMES.join(", ")))
        }),
        (None, Some(s)) => Ok(s.clone()),
        (None, None) => Err(key_error("scenario", "missing; give a builtin name or a [scenario] table")),
    }
}

/// Scenario overrides shared by `run` and `sweep`.
pub struct Overrides<'a> {
    pub mesh: Option<&'a str>,
    pub k: Option<usize>,
    pub limiter: Option<&'a str>,
    pub h: Option<f64>,
    pub t_final: Option<f64>,
    pub cfl: Option<f64>,
    pub samples: Option<usize>,
}

pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(m) = o.mesh {
        cfg.mesh = m.parse::<MeshSpec>().map_err(|e| key_error("mesh", e))?;
    }
    if let Some(k) = o.k {
        if k > 2 {
            return Err(key_error("k", format!("{k} not supported (0, 1 or 2)")));
        }
        cfg.k = k;
    }
    if let Some(l) = o.limiter {
        l.parse::<LimiterConfig>()
            .map_err(|_| key_error("limiter", format!("unknown limiter label `{l}`; valid labels: {VALID_LABELS}")))?;
        cfg.limiter = l.to_string();
    }
    if let Some(h) = o.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(key_error("h", format!("{h} must be positive")));
        }
        cfg.h = h;
    }
    if let Some(t) = o.t_final {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(key_error("t_final", format!("{t} must be finite and non-negative")));
        }
        if let Some(s) = cfg.steady.as_mut() {
            s.t_max = t;
        } else {
            cfg.t_final = t;
        }
    }
    if let Some(c) = o.cfl {
        if !(c > 0.0 && c <= 1.0) {
            return Err(key_error("cfl", format!("{c} outside (0, 1]")));
        }
        cfg.cfl_safety = c;
    }
    if let Some(s) = o.samples {
        if s == 0 {
            return Err(key_error("samples", "must be at least 1"));
        }
        cfg.samples = s;
    }
    cfg.validate().map_err(|e| CliError::Config(format!("scenario `{}`: {e}", cfg.name)))
}

/// `cells`, `nodes` or `lattice:NXxNY`.
pub fn parse_sampling(s: &str) -> Result<FieldSampling, CliError> {
    match s {
        "cells" => Ok(FieldSampling::CellMeans),
        "nodes" => Ok(FieldSampling::Nodes),
        other => {
            let dims = other.strip_prefix("lattice:").and_then(|d| {
                let (a, b) = d.split_once('x')?;
                Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?))
            });
            match dims {
                Some((nx, ny)) if nx > 0 && ny > 0 => Ok(FieldSampling::Lattice { nx, ny }),
                _ => Err(key_error("sampling", format!("`{other}`; expected cells, nodes or lattice:NXxNY"))),
            }
        }
    }
}

pub fn check_threads(threads: Option<usize>) -> Result<Option<usize>, CliError> {
    match threads {
        Some(0) => Err(key_error("threads", "must be at least 1")),
        t => Ok(t),
    }
}
