use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    MagnitudePrune,
    ObsPrune,
    RtnQuant,
    ObsQuant,
    Joint,
}

impl Method {
    pub fn prunes(self) -> bool {
        matches!(self, Method::MagnitudePrune | Method::ObsPrune | Method::Joint)
    }

    pub fn quantizes(self) -> bool {
        matches!(self, Method::RtnQuant | Method::ObsQuant | Method::Joint)
    }

    pub fn needs_calibration(self) -> bool {
        matches!(self, Method::ObsPrune | Method::ObsQuant | Method::Joint)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSettings {
    pub n_sequences: usize,
    pub seq_len: usize,
    /// Corpus name the statistics come from; `None` means the training corpus.
    #[serde(default)]
    pub corpus: Option<String>,
}

impl Default for CalibSettings {
    fn default() -> Self {
        CalibSettings { n_sequences: 16, seq_len: 128, corpus: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSpec {
    pub method: Method,
    #[serde(default)]
    pub sparsity: Option<f64>,
    #[serde(default)]
    pub bits: Option<u8>,
    /// Columns per quantization group; a value ≥ the row width gives one group per row.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default)]
    pub calib: CalibSettings,
    /// Hessian damping as a fraction of its mean diagonal.
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
}

fn default_group_size() -> usize {
    32
}

fn default_damping() -> f64 {
    0.01
}

fn default_block_size() -> usize {
    16
}

impl CompressionSpec {
    fn base(method: Method) -> CompressionSpec {
        CompressionSpec {
            method,
            sparsity: None,
            bits: None,
            group_size: default_group_size(),
            calib: CalibSettings::default(),
            damping: default_damping(),
            block_size: default_block_size(),
        }
    }

    pub fn none() -> CompressionSpec {
        Self::base(Method::None)
    }

    pub fn magnitude(sparsity: f64) -> CompressionSpec {
        CompressionSpec { sparsity: Some(sparsity), ..Self::base(Method::MagnitudePrune) }
    }

    pub fn obs_prune(sparsity: f64) -> CompressionSpec {
        CompressionSpec { sparsity: Some(sparsity), ..Self::base(Method::ObsPrune) }
    }

    pub fn rtn(bits: u8) -> CompressionSpec {
        CompressionSpec { bits: Some(bits), ..Self::base(Method::RtnQuant) }
    }

    pub fn obs_quant(bits: u8) -> CompressionSpec {
        CompressionSpec { bits: Some(bits), ..Self::base(Method::ObsQuant) }
    }

    pub fn joint(sparsity: f64, bits: u8) -> CompressionSpec {
        CompressionSpec { sparsity: Some(sparsity), bits: Some(bits), ..Self::base(Method::Joint) }
    }

    pub fn with_group_size(mut self, group_size: usize) -> CompressionSpec {
        self.group_size = group_size;
        self
    }

    pub fn with_calib(mut self, n_sequences: usize, seq_len: usize) -> CompressionSpec {
        self.calib.n_sequences = n_sequences;
        self.calib.seq_len = seq_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        match (m.prunes(), self.sparsity) {
            (true, None) => return Err(Error::Config(format!("{m:?} needs a sparsity"))),
            (false, Some(_)) => return Err(Error::Config(format!("{m:?} takes no sparsity"))),
            (true, Some(s)) if !(0.0..1.0).contains(&s) => {
                return Err(Error::Config(format!("sparsity {s} outside [0, 1)")))
            }
            _ => {}
        }
        match (m.quantizes(), self.bits) {
            (true, None) => return Err(Error::Config(format!("{m:?} needs a bit width"))),
            (false, Some(_)) => return Err(Error::Config(format!("{m:?} takes no bit width"))),
            (true, Some(b)) if ![2, 3, 4, 8].contains(&b) => {
                return Err(Error::Config(format!("bits must be 2, 3, 4 or 8, got {b}")))
            }
            _ => {}
        }
        if self.group_size == 0 || self.block_size == 0 {
            return Err(Error::Config("group_size and block_size must be positive".into()));
        }
        if !(self.damping > 0.0) {
            return Err(Error::Config("damping must be positive".into()));
        }
        if m.needs_calibration() && (self.calib.n_sequences == 0 || self.calib.seq_len < 2) {
            return Err(Error::Config("calibration needs ≥ 1 sequence of ≥ 2 tokens".into()));
        }
        Ok(())
    }

    /// Short human label used in reports, e.g. `obs-quant-3bit` or `joint-50%+4bit`.
    pub fn label(&self) -> String {
        let pct = |s: f64| {
            let p = s * 100.0;
            if (p - p.round()).abs() < 1e-9 {
                format!("{}%", p.round())
            } else {
                format!("{p}%")
            }
        };
        let s = self.sparsity.map(pct).unwrap_or_default();
        let b = self.bits.map(|b| format!("{b}bit")).unwrap_or_default();
        match self.method {
            Method::None => "full".to_string(),
            Method::MagnitudePrune => format!("magnitude-{s}"),
            Method::ObsPrune => format!("obs-prune-{s}"),
            Method::RtnQuant => format!("rtn-{b}"),
            Method::ObsQuant => format!("obs-quant-{b}"),
            Method::Joint => format!("joint-{s}+{b}"),
        }
    }
}
