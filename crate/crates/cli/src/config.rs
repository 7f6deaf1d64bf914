//! Run configuration: JSON file plus flag overrides.

use anyhow::{bail, Context};
use ruelle_core::circle_map::{CircleMap, MapSpec, TrigPoly};
use ruelle_core::dc_class::{ClassSpec, MSequence};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_N_TRACES: usize = 10;
pub const N_MAX: usize = 14;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub map: MapSpec,
    pub class: ClassSpec,
    pub theta: f64,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_n_traces")]
    pub n_traces: usize,
    #[serde(default)]
    pub r_weight: Option<f64>,
    #[serde(default)]
    pub order_m: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_k_list() -> Vec<usize> {
    vec![96, 128]
}

fn default_n_traces() -> usize {
    DEFAULT_N_TRACES
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Flag-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Block geometry ratio theta in (1, lambda).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Comma-separated ascending truncation sizes, e.g. "96,128".
    #[arg(long = "K", value_name = "K1,K2,…")]
    pub k_list: Option<String>,
    /// Number of flat traces / series order.
    #[arg(long)]
    pub n_traces: Option<usize>,
    /// Weight calibration R (skips the block-norm calibration).
    #[arg(long)]
    pub r_weight: Option<f64>,
    /// Regularized determinant order (default: fitted from singular values).
    #[arg(long)]
    pub order_m: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything the pipeline stages consume, validated once.
pub struct Resolved {
    pub config: RunConfig,
    pub map: CircleMap,
    pub psi: Option<TrigPoly>,
    pub m_seq: MSequence,
    /// Canonical config serialization hash embedded in every report.
    pub config_hash: String,
}

pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Resolved> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut config: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => bail!(
            "malformed config {}: {} (line {}, column {})",
            path.display(),
            e,
            e.line(),
            e.column()
        ),
    };

    if let Some(theta) = overrides.theta {
        config.theta = theta;
    }
    if let Some(ks) = &overrides.k_list {
        config.k_list = ks
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .context("--K expects comma-separated integers")?;
    }
    if let Some(n) = overrides.n_traces {
        config.n_traces = n;
    }
    if overrides.r_weight.is_some() {
        config.r_weight = overrides.r_weight;
    }
    if overrides.order_m.is_some() {
        config.order_m = overrides.order_m;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = out.clone();
    }

    let (map, psi) = config.map.build()?;
    let m_seq = MSequence::from_spec(&config.class)?;

    if !(config.theta > 1.0 && config.theta < map.lambda()) {
        bail!(
            "theta = {} must lie in (1, lambda) = (1, {:.6})",
            config.theta,
            map.lambda()
        );
    }
    if config.k_list.len() < 2 || config.k_list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("k_list must contain at least two ascending entries");
    }
    if config.n_traces == 0 || config.n_traces > N_MAX {
        bail!("n_traces must lie in 1..={N_MAX}");
    }
    if let Some(r) = config.r_weight {
        if !(r > 0.0) {
            bail!("r_weight must be positive");
        }
    }

    // The hash identifies the computation; the output location is not part
    // of it.
    let mut hashed = config.clone();
    hashed.out_dir = PathBuf::new();
    let canonical = serde_json::to_string(&hashed).expect("config reserialization");
    let config_hash = crate::report::fnv1a_hex(canonical.as_bytes());
    Ok(Resolved {
        config,
        map,
        psi,
        m_seq,
        config_hash,
    })
}
