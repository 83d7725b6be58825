//! Flat `key = value` experiment files with dotted keys and `#` comments.
//!
//! ```text
//! method = refined
//! refinements = 5
//! trials = 100
//! problem.n_points = 1024
//! problem.rot_range_deg = 0, 45        # all three axes
//! problem.trans_range.z = [-0.1, 0.1]  # one axis
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rigid_refine::refiner::DEFAULT_REFINEMENTS;
use rigid_refine::synth::{BaseCloud, ProblemSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Kabsch,
    Refined,
    Icp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kabsch => "kabsch",
            Method::Refined => "refined",
            Method::Icp => "icp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "kabsch" => Ok(Method::Kabsch),
            "refined" => Ok(Method::Refined),
            "icp" => Ok(Method::Icp),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: Method,
    pub refinements: usize,
    pub trials: usize,
    /// `None` writes to standard output.
    pub output_path: Option<PathBuf>,
    pub report_diagnostics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::default(),
            method: Method::Refined,
            refinements: DEFAULT_REFINEMENTS,
            trials: 10,
            output_path: None,
            report_diagnostics: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.method == Method::Refined && self.refinements == 0 {
            return Err(ConfigError::Invalid("refinements must be at least 1 for method = refined".into()));
        }
        self.problem
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }
}

const AXES_ZYX: [&str; 3] = ["z", "y", "x"];
const AXES_XYZ: [&str; 3] = ["x", "y", "z"];

fn parse_range(value: &str) -> Option<[f64; 2]> {
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => Some([lo.parse().ok()?, hi.parse().ok()?]),
        _ => None,
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Sets an axis range: `base` for all axes or `base.<axis>` for one.
fn set_range(ranges: &mut [[f64; 2]; 3], axes: [&str; 3], suffix: &str, value: [f64; 2]) -> bool {
    if suffix.is_empty() {
        *ranges = [value; 3];
        return true;
    }
    match axes.iter().position(|a| suffix == format!(".{a}")) {
        Some(i) => {
            ranges[i] = value;
            true
        }
        None => false,
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        let mut slab_thickness = 0.01;
        let mut cloud_name = String::from("ball");
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let invalid = || ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            fn num<T: FromStr>(v: &str) -> Option<T> {
                v.parse().ok()
            }
            let p = &mut config.problem;
            let ok = match key {
                "method" => value.parse().map(|m| config.method = m).is_ok(),
                "refinements" => num(value).map(|v| config.refinements = v).is_some(),
                "trials" => num(value).map(|v| config.trials = v).is_some(),
                "output_path" => {
                    config.output_path = (!value.is_empty()).then(|| PathBuf::from(value));
                    true
                }
                "report_diagnostics" => parse_bool(value).map(|v| config.report_diagnostics = v).is_some(),
                "problem.n_points" => num(value).map(|v| p.n_points = v).is_some(),
                "problem.cloud" => {
                    cloud_name = value.to_string();
                    matches!(value, "ball" | "sphere" | "slab")
                }
                "problem.slab_thickness" => num(value).map(|v| slab_thickness = v).is_some(),
                "problem.noise_sigma" => num(value).map(|v| p.noise_sigma = v).is_some(),
                "problem.noise_clamp" => num(value).map(|v| p.noise_clamp = v).is_some(),
                "problem.crop_keep_fraction" => num(value).map(|v| p.crop_keep_fraction = v).is_some(),
                "problem.independent_resample" => parse_bool(value).map(|v| p.independent_resample = v).is_some(),
                "problem.seed" => num(value).map(|v| p.seed = v).is_some(),
                _ => {
                    let (ranges, axes, suffix) = if let Some(s) = key.strip_prefix("problem.rot_range_deg") {
                        (&mut p.rot_range_deg, AXES_ZYX, s)
                    } else if let Some(s) = key.strip_prefix("problem.trans_range") {
                        (&mut p.trans_range, AXES_XYZ, s)
                    } else {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        });
                    };
                    let range = parse_range(value).ok_or_else(invalid)?;
                    if !set_range(ranges, axes, suffix, range) {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.to_string(),
                        });
                    }
                    true
                }
            };
            if !ok {
                return Err(invalid());
            }
        }
        config.problem.cloud = match cloud_name.as_str() {
            "sphere" => BaseCloud::Sphere,
            "slab" => BaseCloud::Slab {
                thickness: slab_thickness,
            },
            _ => BaseCloud::Ball,
        };
        config.validate()?;
        Ok(config)
    }
}
