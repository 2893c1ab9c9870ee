//! JSON fading descriptors.
//!
//! ```json
//! {"kind": "discrete", "gammas": [0.5, 1.0], "probs": [0.3, 0.6], "outage": 0.1}
//! {"kind": "rayleigh", "mean_gain": 1.0, "discretize": {"truncation": 2.0, "levels": 24}}
//! {"kind": "erlang", "diversity": 3, "mean_gain": 1.0}
//! {"kind": "tabulated", "gammas": [0.0, 1.0, 2.0], "pdf": [0.0, 1.0, 0.0]}
//! ```

use std::path::Path;

use layercast_core::fading::{discretize_rayleigh, ContinuousFading, DiscreteFading, FadingState};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretize {
    pub truncation: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FadingDescriptor {
    Discrete {
        gammas: Vec<f64>,
        probs: Vec<f64>,
        /// Defaults to the mass the states leave over.
        #[serde(default)]
        outage: Option<f64>,
    },
    Rayleigh {
        #[serde(default = "unit")]
        mean_gain: f64,
        #[serde(default)]
        discretize: Option<Discretize>,
    },
    Erlang {
        diversity: u32,
        #[serde(default = "unit")]
        mean_gain: f64,
    },
    Tabulated {
        gammas: Vec<f64>,
        pdf: Vec<f64>,
    },
}

/// A descriptor written inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FadingSource {
    Inline(FadingDescriptor),
    Path(String),
}

impl FadingSource {
    /// Inline JSON when the argument starts with `{`, else a file path.
    pub fn from_arg(arg: &str) -> Self {
        match serde_json::from_str(arg.trim_start()) {
            Ok(d) if arg.trim_start().starts_with('{') => Self::Inline(d),
            _ => Self::Path(arg.to_string()),
        }
    }

    pub fn resolve(&self) -> Result<FadingDescriptor, CliError> {
        match self {
            Self::Inline(d) => Ok(d.clone()),
            Self::Path(p) => {
                if p.trim_start().starts_with('{') {
                    return serde_json::from_str(p)
                        .map_err(|e| CliError::usage(format!("bad inline fading descriptor: {e}")));
                }
                FadingDescriptor::load(Path::new(p))
            }
        }
    }
}

impl FadingDescriptor {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read fading descriptor {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad fading descriptor {}: {e}", path.display())))
    }

    /// The discrete pmf, when the descriptor defines one.
    pub fn discrete(&self) -> Result<Option<DiscreteFading>, CliError> {
        Ok(match self {
            Self::Discrete { gammas, probs, outage } => {
                if gammas.len() != probs.len() {
                    return Err(CliError::usage(format!(
                        "discrete descriptor has {} gains but {} probabilities",
                        gammas.len(),
                        probs.len()
                    )));
                }
                let states: Vec<FadingState> =
                    gammas.iter().zip(probs).map(|(&gamma, &prob)| FadingState { gamma, prob }).collect();
                let outage = outage.unwrap_or_else(|| (1.0 - probs.iter().sum::<f64>()).max(0.0));
                Some(DiscreteFading::new(states, outage)?)
            }
            Self::Rayleigh { mean_gain, discretize: Some(d) } => {
                Some(discretize_rayleigh(*mean_gain, d.truncation, d.levels)?)
            }
            _ => None,
        })
    }

    /// The continuous law, when the descriptor defines one.
    pub fn continuous(&self) -> Result<Option<ContinuousFading>, CliError> {
        Ok(match self {
            Self::Rayleigh { mean_gain, .. } => Some(ContinuousFading::rayleigh(*mean_gain)?),
            Self::Erlang { diversity, mean_gain } => Some(ContinuousFading::erlang(*diversity, *mean_gain)?),
            Self::Tabulated { gammas, pdf } => Some(ContinuousFading::tabulated(gammas.clone(), pdf.clone())?),
            Self::Discrete { .. } => None,
        })
    }

    pub fn require_discrete(&self) -> Result<DiscreteFading, CliError> {
        self.discrete()?.ok_or_else(|| {
            CliError::usage("this command needs a discrete pmf: use kind \"discrete\" or rayleigh with \"discretize\"")
        })
    }

    pub fn require_continuous(&self) -> Result<ContinuousFading, CliError> {
        self.continuous()?
            .ok_or_else(|| CliError::usage("this command needs a continuous law: rayleigh, erlang, or tabulated"))
    }

    /// Mean channel gain of the law (continuous if available, else the pmf's).
    pub fn mean_gain(&self) -> Result<f64, CliError> {
        if let Some(c) = self.continuous()? {
            return Ok(c.mean());
        }
        let d = self.require_discrete()?;
        Ok(d.states().iter().map(|s| s.prob * s.gamma).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds() {
        let d: FadingDescriptor =
            serde_json::from_str(r#"{"kind":"discrete","gammas":[1,2],"probs":[0.25,0.5]}"#).unwrap();
        let pmf = d.discrete().unwrap().unwrap();
        assert_eq!(pmf.outage_prob(), 0.25);
        assert!(d.continuous().unwrap().is_none());

        let r: FadingDescriptor =
            serde_json::from_str(r#"{"kind":"rayleigh","mean_gain":1,"discretize":{"truncation":2,"levels":24}}"#)
                .unwrap();
        assert_eq!(r.discrete().unwrap().unwrap().len(), 24);
        assert!(r.continuous().unwrap().is_some());

        let e: FadingDescriptor = serde_json::from_str(r#"{"kind":"erlang","diversity":3}"#).unwrap();
        assert_eq!(e.mean_gain().unwrap(), 1.0);
        assert!(e.require_discrete().is_err());

        let t: FadingDescriptor =
            serde_json::from_str(r#"{"kind":"tabulated","gammas":[0,1,2],"pdf":[0,1,0]}"#).unwrap();
        assert!((t.mean_gain().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_fields_and_kinds() {
        assert!(serde_json::from_str::<FadingDescriptor>(r#"{"kind":"rician","k":3}"#).is_err());
        assert!(serde_json::from_str::<FadingDescriptor>(r#"{"kind":"erlang","diversity":2,"x":1}"#).is_err());
    }

    #[test]
    fn inline_or_path() {
        assert!(matches!(FadingSource::from_arg(r#"{"kind":"rayleigh"}"#), FadingSource::Inline(_)));
        assert!(matches!(FadingSource::from_arg("fading.json"), FadingSource::Path(_)));
    }
}
