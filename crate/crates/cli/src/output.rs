//! Output envelopes: every artifact carries the tool version, a hash of the
//! resolved configuration, the seed and the full parameter set.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use coinfect::ModelParams;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "coinfect";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that influences an output. `--out` and `--jobs` are left out
/// because they do not change the bytes written.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub command: &'static str,
    pub params: ModelParams,
    pub k: Option<f64>,
    pub k_range: Option<(f64, f64, usize)>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
    pub include_r: bool,
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    pub initial: Option<[f64; 5]>,
}

impl ResolvedConfig {
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    seed: u64,
    config: &'a ResolvedConfig,
    result: T,
}

pub fn json_document<T: Serialize>(cfg: &ResolvedConfig, result: T) -> String {
    let env = Envelope {
        tool: TOOL,
        version: VERSION,
        command: cfg.command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("output serializes");
    s.push('\n');
    s
}

/// `#`-prefixed preamble, ignored by gnuplot and most CSV readers.
pub fn csv_preamble(cfg: &ResolvedConfig) -> String {
    format!(
        "# {TOOL} {VERSION}\n# command: {}\n# config_hash: {}\n# seed: {}\n# config: {}\n",
        cfg.command,
        cfg.hash(),
        cfg.seed,
        serde_json::to_string(cfg).expect("config serializes")
    )
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_file(dir: &Path, name: &str, body: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}
