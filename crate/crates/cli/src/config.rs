//! Experiment configuration: one strict JSON document with a `version` field.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vis_yield::optimize::{OmsvMode, OptimizeConfig};
use vis_yield::sampling::{BeyondConfig, McConfig};
use vis_yield::testbench::{BenchSpec, QuadraticFamily};
use vis_yield::visfit::Tier;

pub const CONFIG_VERSION: u32 = 1;

/// An estimator together with its tier, written `mc`, `mnis`, `beyond` or
/// `beyond:<tier>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mc,
    Mnis,
    /// `None` means the tier from the `beyond` section.
    Beyond(Option<Tier>),
    Optimize,
}

impl Method {
    /// Label with the tier resolved, as used in reports and file names.
    pub fn label(self, default_tier: Tier) -> String {
        match self {
            Method::Mc => "mc".into(),
            Method::Mnis => "mnis".into(),
            Method::Beyond(t) => format!("beyond:{}", t.unwrap_or(default_tier)),
            Method::Optimize => "optimize".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mc => f.write_str("mc"),
            Method::Mnis => f.write_str("mnis"),
            Method::Beyond(None) => f.write_str("beyond"),
            Method::Beyond(Some(t)) => write!(f, "beyond:{t}"),
            Method::Optimize => f.write_str("optimize"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mc" => Ok(Method::Mc),
            "mnis" => Ok(Method::Mnis),
            "beyond" => Ok(Method::Beyond(None)),
            "optimize" => Ok(Method::Optimize),
            _ => match s.strip_prefix("beyond:") {
                Some(t) => Ok(Method::Beyond(Some(t.parse()?))),
                None => Err(format!("unknown method `{s}` (expected mc, mnis, beyond, beyond:<tier> or optimize)")),
            },
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The `optimize` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub family: QuadraticFamily,
    #[serde(default)]
    pub config: OptimizeConfig,
    /// Modes to run on the shared seed list; defaults to the config's mode.
    #[serde(default)]
    pub modes: Vec<OmsvMode>,
    /// Oracle level whose first crossing is reported as `sims_to_target`.
    #[serde(default = "default_target_pf")]
    pub target_pf: f64,
}

fn default_target_pf() -> f64 {
    1e-4
}

impl OptimizeSection {
    pub fn modes(&self) -> Vec<OmsvMode> {
        if self.modes.is_empty() {
            vec![self.config.omsv_mode]
        } else {
            self.modes.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
    /// Method for `estimate`.
    #[serde(default)]
    pub method: Option<Method>,
    /// Methods for `compare`.
    #[serde(default)]
    pub methods: Vec<Method>,
    /// Default tier for `beyond`; overrides `beyond.fit.tier`.
    #[serde(default)]
    pub tier: Option<Tier>,
    pub seeds: Vec<u64>,
    /// Overrides the FoM target of every estimator.
    #[serde(default = "default_fom_target")]
    pub fom_target: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub beyond: BeyondConfig,
    /// Settings for `mnis`; defaults to the `beyond` section with no burn-in.
    #[serde(default)]
    pub mnis: Option<BeyondConfig>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub optimize: Option<OptimizeSection>,
}

fn default_fom_target() -> f64 {
    0.1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("vis-yield-out")
}

/// Configuration problem, always naming the offending field.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: &str, message: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Schema {
                path,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks the fields every command relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::invalid(
                "version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(ConfigError::invalid("seeds", "seeds must be distinct"));
        }
        if !(self.fom_target > 0.0 && self.fom_target < 1.0) {
            return Err(ConfigError::invalid("fom_target", "must lie in (0, 1)"));
        }
        self.beyond_config().validate().map_err(|e| ConfigError::invalid("beyond", e))?;
        self.mnis_config().validate().map_err(|e| ConfigError::invalid("mnis", e))?;
        self.mc_config().validate().map_err(|e| ConfigError::invalid("mc", e))?;
        if let Some(opt) = &self.optimize {
            opt.family.validate().map_err(|e| ConfigError::invalid("optimize.family", e))?;
            opt.config
                .validate(&opt.family)
                .map_err(|e| ConfigError::invalid("optimize.config", e))?;
        }
        Ok(())
    }

    pub fn default_tier(&self) -> Tier {
        self.tier.unwrap_or(self.beyond.fit.tier)
    }

    pub fn beyond_config(&self) -> BeyondConfig {
        let mut cfg = self.beyond;
        cfg.fom_target = self.fom_target;
        cfg.fit.tier = self.default_tier();
        cfg
    }

    pub fn beyond_for(&self, tier: Option<Tier>) -> BeyondConfig {
        let mut cfg = self.beyond_config();
        if let Some(t) = tier {
            cfg.fit.tier = t;
        }
        cfg
    }

    pub fn mnis_config(&self) -> BeyondConfig {
        let mut cfg = self.mnis.unwrap_or(BeyondConfig {
            burn_in: 0,
            ..self.beyond
        });
        cfg.fom_target = self.fom_target;
        cfg
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            fom_target: self.fom_target,
            ..self.mc
        }
    }

    pub fn require_bench(&self) -> Result<&BenchSpec, ConfigError> {
        self.bench
            .as_ref()
            .ok_or_else(|| ConfigError::invalid("bench", "missing field `bench` (required by estimate and compare)"))
    }
}

/// Parses a `--seeds` list such as `0,1,2`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    s.split(',')
        .map(|t| t.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConfigError::invalid("seeds", format!("cannot parse `{s}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"{
        "version": 1,
        "bench": {"dim": 2, "kind": {"type": "axis", "axis": 0, "threshold": 3.0}},
        "method": "beyond:full_covariance",
        "seeds": [0, 1]
    }"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(LINEAR).unwrap();
        assert_eq!(cfg.method, Some(Method::Beyond(Some(Tier::FullCovariance))));
        assert_eq!(cfg.fom_target, 0.1);
        assert_eq!(cfg.beyond_config().fom_target, 0.1);
        assert_eq!(cfg.mnis_config().burn_in, 0);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = LINEAR.replace("\"seeds\"", "\"fom_taget\": 0.2, \"seeds\"");
        let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("fom_taget"), "{msg}");
    }

    #[test]
    fn nested_errors_carry_their_path() {
        let text = LINEAR.replace("\"threshold\": 3.0", "\"threshold\": \"x\"");
        let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(msg.contains("bench.kind"), "{msg}");
    }

    #[test]
    fn seeds_and_target_are_checked() {
        for (patch, field) in [
            ("\"seeds\": [0, 1]", "`seeds`"),
            ("\"seeds\": [0, 0]", "`seeds`"),
            ("\"seeds\": [0, 1], \"fom_target\": 1.5", "`fom_target`"),
            ("\"seeds\": [0, 1], \"version\": 2", "version"),
        ] {
            let text = if patch == "\"seeds\": [0, 1]" {
                LINEAR.replace("\"seeds\": [0, 1]", "\"seeds\": []")
            } else {
                LINEAR.replace("\"seeds\": [0, 1]", patch)
            };
            let msg = ExperimentConfig::from_json(&text).unwrap_err().to_string();
            assert!(msg.contains(field), "{patch}: {msg}");
        }
    }

    #[test]
    fn method_labels_round_trip() {
        for s in ["mc", "mnis", "beyond", "beyond:skew_normal", "optimize"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("beyond:nope".parse::<Method>().is_err());
        assert_eq!(Method::Beyond(None).label(Tier::ScalarSss), "beyond:scalar_sss");
    }

    #[test]
    fn seed_list_parses() {
        assert_eq!(parse_seeds("3, 1,2").unwrap(), vec![3, 1, 2]);
        assert!(parse_seeds("1,x").is_err());
    }
}
