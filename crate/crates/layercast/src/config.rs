//! Run configuration shared by the command line and `sweep` config files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::descriptor::FadingSource;
use crate::error::CliError;
use crate::output::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TwoLayer,
    AllocDiscrete,
    AllocContinuous,
    MinCost,
    Bounds,
    Montecarlo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::TwoLayer => "two-layer",
            Self::AllocDiscrete => "alloc-discrete",
            Self::AllocContinuous => "alloc-continuous",
            Self::MinCost => "min-cost",
            Self::Bounds => "bounds",
            Self::Montecarlo => "montecarlo",
        }
    }

    pub fn default_format(self) -> Format {
        match self {
            Self::MinCost | Self::Montecarlo => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSel {
    All,
    CsitQ,
    CsitP,
    InfDiv,
    NoCsit,
}

impl std::str::FromStr for BoundSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown bound {s:?}; expected all, csit-q, csit-p, inf-div, no-csit"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McMode {
    /// Discrete pmf if the descriptor has one, else quantized (with an
    /// allocation file) or continuous.
    Auto,
    Discrete,
    Quantized,
    Continuous,
}

impl std::str::FromStr for McMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown mode {s:?}; expected auto, discrete, quantized, continuous"))
    }
}

/// `D^(k) <= limit` for 1-based state `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cap {
    pub layer: usize,
    pub limit: f64,
}

impl std::str::FromStr for Cap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("cap {s:?} is not of the form k=value"))?;
        Ok(Cap {
            layer: k.trim().parse().map_err(|_| format!("bad cap index {k:?}"))?,
            limit: v.trim().parse().map_err(|_| format!("bad cap value {v:?}"))?,
        })
    }
}

fn default_grid() -> usize {
    200
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_which() -> Vec<BoundSel> {
    vec![BoundSel::All]
}

fn default_mode() -> McMode {
    McMode::Auto
}

/// Accepts `1.0` as well as `[1.0, 2.0]`.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    struct V;

    impl<'de> Visitor<'de> for V {
        type Value = Vec<f64>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or a list of numbers")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
            Ok(vec![v])
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            Ok(vec![v as f64])
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(vec![v as f64])
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some(x) = seq.next_element()? {
                out.push(x);
            }
            Ok(out)
        }
    }

    d.deserialize_any(V)
}

/// Everything one run needs. Lists expand as a cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Command,
    #[serde(default)]
    pub fading: Option<FadingSource>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub b: Vec<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub snr_db: Vec<f64>,

    // two-layer
    #[serde(default, deserialize_with = "one_or_many")]
    pub u: Vec<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub w: Vec<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub alpha: Vec<f64>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub beta: Vec<f64>,
    /// Shorthand for `w = p2, u = 1 - p2`.
    #[serde(default, deserialize_with = "one_or_many")]
    pub p2: Vec<f64>,

    // min-cost
    #[serde(default, deserialize_with = "one_or_many")]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub dmax: Option<f64>,
    #[serde(default)]
    pub vmax: Option<f64>,
    #[serde(default)]
    pub caps: Vec<Cap>,
    #[serde(default)]
    pub gap_tolerance: Option<f64>,

    // alloc-continuous
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Top of the tabulated gain range; defaults to 1.5 gamma_o.
    #[serde(default)]
    pub gamma_max: Option<f64>,
    #[serde(default)]
    pub summary: bool,

    // bounds
    #[serde(default = "default_which")]
    pub which: Vec<BoundSel>,

    // montecarlo
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alloc: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: McMode,

    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn new(subcommand: Command) -> Self {
        Self {
            subcommand,
            fading: None,
            b: Vec::new(),
            snr_db: Vec::new(),
            u: Vec::new(),
            w: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            p2: Vec::new(),
            phi: Vec::new(),
            dmax: None,
            vmax: None,
            caps: Vec::new(),
            gap_tolerance: None,
            grid: default_grid(),
            gamma_max: None,
            summary: false,
            which: default_which(),
            samples: default_samples(),
            seed: 0,
            alloc: None,
            mode: McMode::Auto,
            out: None,
            format: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))?;
        // Relative file references resolve against the config's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(FadingSource::Path(p)) = &cfg.fading {
            if !p.trim_start().starts_with('{') && Path::new(p).is_relative() {
                cfg.fading = Some(FadingSource::Path(base.join(p).to_string_lossy().into_owned()));
            }
        }
        if let Some(a) = &cfg.alloc {
            if a.is_relative() {
                cfg.alloc = Some(base.join(a));
            }
        }
        Ok(cfg)
    }

    /// Output format: explicit, else from the output extension, else the
    /// command's default.
    pub fn output_format(&self) -> Format {
        self.format
            .or_else(|| self.out.as_deref().and_then(Format::from_path))
            .unwrap_or(self.subcommand.default_format())
    }

    /// Checks that do not need any numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, xs: &[f64]| -> Result<(), CliError> {
            match xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                Some(x) => Err(CliError::usage(format!("--{name} must be finite and > 0, got {x}"))),
                None => Ok(()),
            }
        };
        let finite = |name: &str, xs: &[f64]| -> Result<(), CliError> {
            match xs.iter().find(|x| !x.is_finite()) {
                Some(x) => Err(CliError::usage(format!("--{name} must be finite, got {x}"))),
                None => Ok(()),
            }
        };
        let nonempty = |name: &str, xs: &[f64]| -> Result<(), CliError> {
            if xs.is_empty() {
                Err(CliError::usage(format!("{} needs --{name}", self.subcommand.name())))
            } else {
                Ok(())
            }
        };

        nonempty("b", &self.b)?;
        positive("b", &self.b)?;
        finite("snr-db", &self.snr_db)?;
        if self.subcommand != Command::TwoLayer && self.fading.is_none() {
            return Err(CliError::usage(format!("{} needs --fading", self.subcommand.name())));
        }
        match self.subcommand {
            Command::TwoLayer => {
                nonempty("snr-db", &self.snr_db)?;
                nonempty("beta", &self.beta)?;
                if !self.p2.is_empty() && !(self.u.is_empty() && self.w.is_empty()) {
                    return Err(CliError::usage("--p2 replaces --u/--w; give one or the other"));
                }
                if self.p2.is_empty() && (self.u.is_empty() || self.w.is_empty()) {
                    return Err(CliError::usage("two-layer needs --u and --w, or --p2"));
                }
                if let Some(p) = self.p2.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                    return Err(CliError::usage(format!("--p2 must be in [0, 1], got {p}")));
                }
                finite("u", &self.u)?;
                finite("w", &self.w)?;
                finite("alpha", &self.alpha)?;
                finite("beta", &self.beta)?;
            }
            Command::AllocDiscrete | Command::AllocContinuous | Command::Bounds => {
                nonempty("snr-db", &self.snr_db)?;
            }
            Command::MinCost => {
                nonempty("snr-db", &self.snr_db)?;
                if let Some(x) = self.phi.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                    return Err(CliError::usage(format!("--phi must be finite and >= 0, got {x}")));
                }
                if let Some(t) = self.gap_tolerance {
                    if !(t.is_finite() && t > 0.0) {
                        return Err(CliError::usage(format!("--gap-tolerance must be > 0, got {t}")));
                    }
                }
            }
            Command::Montecarlo => {
                if self.b.len() != 1 || self.snr_db.len() > 1 {
                    return Err(CliError::usage("montecarlo takes a single --b and at most one --snr-db"));
                }
                if self.samples == 0 {
                    return Err(CliError::usage("--samples must be > 0"));
                }
            }
        }
        if self.subcommand == Command::AllocContinuous {
            if self.grid < 2 {
                return Err(CliError::usage(format!("--grid must be >= 2, got {}", self.grid)));
            }
            if let Some(g) = self.gamma_max {
                positive("gamma-max", &[g])?;
            }
        }
        if self.which.is_empty() {
            return Err(CliError::usage("--which needs at least one bound"));
        }
        Ok(())
    }
}
