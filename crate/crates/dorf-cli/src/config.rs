//! Pipeline configuration: defaults, the key-value config file format, and
//! deterministic stage-seed derivation.
//!
//! Config files are plain text, one `key = value` per line, `#` comments,
//! with a mandatory `version` field. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dorf_core::doppler::{BinSelection, SpectrogramConfig, Taper};
use dorf_core::error::{Error, Result};
use dorf_core::factorization::FactorizationConfig;
use dorf_core::classifier::TrainConfig;

pub const CONFIG_VERSION: u64 = 1;

/// Every stage's settings plus dataset locations and the global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub version: u64,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,

    // Doppler extraction.
    pub window_len: usize,
    pub hop: usize,
    pub zero_pad: usize,
    pub dc_guard_hz: f64,
    pub taper: Taper,
    /// Retained delay bins per antenna (0 keeps every bin).
    pub bins_per_antenna: usize,

    // Factorization.
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub dtw_band: Option<usize>,
    /// Factorize the concatenated antennas jointly instead of per antenna.
    pub joint_factorization: bool,

    // Field resampling.
    pub grid_m: usize,
    /// Restrict the pipeline to one antenna (None merges all).
    pub antenna: Option<usize>,

    // Classifier.
    pub kernels: usize,
    pub reduced_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub standardize: bool,
    pub val_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            window_len: 128,
            hop: 16,
            zero_pad: 4,
            dc_guard_hz: 0.5,
            taper: Taper::Hann,
            bins_per_antenna: 20,
            lambda: 0.1,
            gamma: 0.01,
            epsilon: 0.01,
            max_iters: 100,
            dtw_band: None,
            joint_factorization: false,
            grid_m: 8,
            antenna: None,
            kernels: 1000,
            reduced_dim: 128,
            hidden_dim: 256,
            num_classes: 4,
            learning_rate: 1e-4,
            batch_size: 64,
            label_smoothing: 0.1,
            max_epochs: 2500,
            patience: 200,
            weight_decay: 0.01,
            standardize: true,
            val_fraction: 0.2,
        }
    }
}

impl PipelineConfig {
    pub fn spectrogram(&self) -> SpectrogramConfig {
        SpectrogramConfig {
            window_len: self.window_len,
            hop: self.hop,
            taper: self.taper,
            zero_pad_factor: self.zero_pad,
            dc_guard_hz: self.dc_guard_hz,
        }
    }

    pub fn bin_selection(&self) -> BinSelection {
        if self.bins_per_antenna == 0 {
            BinSelection::All
        } else {
            BinSelection::TopPower(self.bins_per_antenna)
        }
    }

    pub fn factorization(&self) -> FactorizationConfig {
        FactorizationConfig {
            lambda: self.lambda,
            gamma: self.gamma,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            seed: self.stage_seed("factorization"),
            dtw_band: self.dtw_band,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            label_smoothing: self.label_smoothing,
            max_epochs: self.max_epochs,
            patience: self.patience,
            weight_decay: self.weight_decay,
            reduced_dim: self.reduced_dim,
            hidden_dim: self.hidden_dim,
            num_classes: self.num_classes,
            standardize: self.standardize,
            seed: self.stage_seed("training"),
        }
    }

    /// Deterministic per-stage seed derived from the global seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(stage.as_bytes());
        fnv1a64(&bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.spectrogram().validate()?;
        self.factorization().validate()?;
        if self.grid_m == 0 {
            return Err(Error::invalid("grid_m must be at least 1"));
        }
        if self.kernels == 0 {
            return Err(Error::invalid("kernels must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Canonical key-value rendering; also the basis of the config hash.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        push("version", self.version.to_string());
        push("seed", self.seed.to_string());
        push("data_dir", self.data_dir.display().to_string());
        push("out_dir", self.out_dir.display().to_string());
        push("window_len", self.window_len.to_string());
        push("hop", self.hop.to_string());
        push("zero_pad", self.zero_pad.to_string());
        push("dc_guard_hz", format!("{:?}", self.dc_guard_hz));
        push(
            "taper",
            match self.taper {
                Taper::Hann => "hann".into(),
                Taper::Rect => "rect".into(),
            },
        );
        push("bins_per_antenna", self.bins_per_antenna.to_string());
        push("lambda", format!("{:?}", self.lambda));
        push("gamma", format!("{:?}", self.gamma));
        push("epsilon", format!("{:?}", self.epsilon));
        push("max_iters", self.max_iters.to_string());
        push(
            "dtw_band",
            self.dtw_band.map_or("auto".into(), |b| b.to_string()),
        );
        push(
            "joint_factorization",
            self.joint_factorization.to_string(),
        );
        push("grid_m", self.grid_m.to_string());
        push(
            "antenna",
            self.antenna.map_or("all".into(), |a| a.to_string()),
        );
        push("kernels", self.kernels.to_string());
        push("reduced_dim", self.reduced_dim.to_string());
        push("hidden_dim", self.hidden_dim.to_string());
        push("num_classes", self.num_classes.to_string());
        push("learning_rate", format!("{:?}", self.learning_rate));
        push("batch_size", self.batch_size.to_string());
        push("label_smoothing", format!("{:?}", self.label_smoothing));
        push("max_epochs", self.max_epochs.to_string());
        push("patience", self.patience.to_string());
        push("weight_decay", format!("{:?}", self.weight_decay));
        push("standardize", self.standardize.to_string());
        push("val_fraction", format!("{:?}", self.val_fraction));
        out
    }

    /// Parses the key-value text; unknown keys and malformed values error.
    pub fn from_key_value(text: &str) -> Result<PipelineConfig> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::invalid(format!(
                    "config line {}: expected 'key = value', got '{line}'",
                    idx + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        if !map.contains_key("version") {
            return Err(Error::invalid("config file is missing the version field"));
        }
        let mut cfg = PipelineConfig::default();
        for (k, v) in &map {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_key_value(&text)
    }

    /// Assigns one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("config key {key}: bad value '{v}'")))
        }
        match key {
            "version" => self.version = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "window_len" => self.window_len = parse(key, value)?,
            "hop" => self.hop = parse(key, value)?,
            "zero_pad" => self.zero_pad = parse(key, value)?,
            "dc_guard_hz" => self.dc_guard_hz = parse(key, value)?,
            "taper" => {
                self.taper = match value {
                    "hann" => Taper::Hann,
                    "rect" => Taper::Rect,
                    other => {
                        return Err(Error::invalid(format!(
                            "config key taper: unknown taper '{other}'"
                        )))
                    }
                }
            }
            "bins_per_antenna" => self.bins_per_antenna = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "dtw_band" => {
                self.dtw_band = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "joint_factorization" => self.joint_factorization = parse(key, value)?,
            "grid_m" => self.grid_m = parse(key, value)?,
            "antenna" => {
                self.antenna = if value == "all" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "kernels" => self.kernels = parse(key, value)?,
            "reduced_dim" => self.reduced_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "num_classes" => self.num_classes = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "label_smoothing" => self.label_smoothing = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "standardize" => self.standardize = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            other => {
                return Err(Error::invalid(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Hash over everything that affects pipeline artifacts (paths excluded).
    pub fn artifact_hash(&self) -> u64 {
        let text = self.to_key_value();
        let filtered: String = text
            .lines()
            .filter(|l| !l.starts_with("data_dir") && !l.starts_with("out_dir"))
            .collect::<Vec<_>>()
            .join("\n");
        fnv1a64(filtered.as_bytes())
    }
}

/// FNV-1a 64-bit hash; stable across runs and platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
