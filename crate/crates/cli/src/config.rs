//! Flat `key = value` run configuration.
//!
//! Energies and temperatures are in units of the reference energy `E`.
//! Blank lines and `#` comments are ignored. Keys not given keep the
//! defaults of [`RunConfig::default`].

use std::fmt::Write as _;

use qtt_core::model::ModelError;
use qtt_core::sweeps::{uniform_grid, AmplificationMode, SweepSpec};
use qtt_core::{eigenoperator_channels, Bath, BathMap, BathSet, SystemParams};
use thiserror::Error;

pub const KEYS: [&str; 16] = [
    "e1",
    "e2",
    "e3",
    "g",
    "gamma_l",
    "gamma_m",
    "gamma_r",
    "t_l",
    "t_m",
    "t_r",
    "sweep_var",
    "sweep_from",
    "sweep_to",
    "sweep_points",
    "amplification",
    "parallel",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}` given twice")]
    Duplicate { key: String },
    #[error("key `{key}`: cannot parse {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: &'static str },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Malformed { .. } => None,
            ConfigError::UnknownKey { key }
            | ConfigError::Duplicate { key }
            | ConfigError::BadValue { key, .. }
            | ConfigError::Invalid { key, .. } => Some(key),
        }
    }

    fn from_model(e: ModelError) -> Self {
        let key = match &e {
            ModelError::NonPositive { name, .. } | ModelError::InvalidTemperature { name, .. } => name.to_string(),
            ModelError::ResonanceViolation { .. } => "e3".into(),
            ModelError::DegenerateFrequency { .. } => "g".into(),
        };
        ConfigError::Invalid { key, message: e.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AmplificationSetting {
    Off,
    Auto,
}

/// Temperature grid for the `sweep` subcommand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSettings {
    pub variable: Bath,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub amplification: AmplificationSetting,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub baths: BathSet,
    pub sweep: SweepSettings,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::reference(),
            baths: BathSet::new(2.0, 2.0, 0.2).expect("valid"),
            sweep: SweepSettings {
                variable: Bath::M,
                from: 0.01,
                to: 2.0,
                points: 200,
                amplification: AmplificationSetting::Off,
            },
            parallel: true,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into(), reason: "not a number" })
}

fn bath_name(bath: Bath) -> &'static str {
    match bath {
        Bath::L => "l",
        Bath::M => "m",
        Bath::R => "r",
    }
}

impl RunConfig {
    /// Parse `text` over the defaults, then validate the whole configuration.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { line: n + 1, text: raw.to_string() })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Self::default().with_overrides(&pairs)
    }

    /// Apply `key = value` pairs in order and validate the result. A key may
    /// appear only once per call.
    pub fn with_overrides(&self, pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut seen: Vec<&str> = Vec::new();
        let mut num: BathMap<f64> = self.baths.temperatures;
        let p = &self.params;
        let mut energies = [p.e1, p.e2, p.e3, p.g];
        let mut gamma = p.gamma;
        let mut sweep = self.sweep;
        let mut parallel = self.parallel;
        for (key, value) in pairs {
            let key = key.as_str();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { key: key.into() });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate { key: key.into() });
            }
            seen.push(key);
            match key {
                "e1" => energies[0] = parse_f64(key, value)?,
                "e2" => energies[1] = parse_f64(key, value)?,
                "e3" => energies[2] = parse_f64(key, value)?,
                "g" => energies[3] = parse_f64(key, value)?,
                "gamma_l" => gamma[Bath::L] = parse_f64(key, value)?,
                "gamma_m" => gamma[Bath::M] = parse_f64(key, value)?,
                "gamma_r" => gamma[Bath::R] = parse_f64(key, value)?,
                "t_l" => num[Bath::L] = parse_f64(key, value)?,
                "t_m" => num[Bath::M] = parse_f64(key, value)?,
                "t_r" => num[Bath::R] = parse_f64(key, value)?,
                "sweep_var" => {
                    sweep.variable = match value.to_ascii_lowercase().as_str() {
                        "l" => Bath::L,
                        "m" => Bath::M,
                        "r" => Bath::R,
                        _ => return Err(ConfigError::BadValue { key: key.into(), value: value.clone(), reason: "expected l, m or r" }),
                    }
                }
                "sweep_from" => sweep.from = parse_f64(key, value)?,
                "sweep_to" => sweep.to = parse_f64(key, value)?,
                "sweep_points" => {
                    sweep.points = value.parse().map_err(|_| ConfigError::BadValue {
                        key: key.into(),
                        value: value.clone(),
                        reason: "not a non-negative integer",
                    })?
                }
                "amplification" => {
                    sweep.amplification = match value.as_str() {
                        "off" => AmplificationSetting::Off,
                        "auto" => AmplificationSetting::Auto,
                        _ => return Err(ConfigError::BadValue { key: key.into(), value: value.clone(), reason: "expected off or auto" }),
                    }
                }
                "parallel" => {
                    parallel = value.parse().map_err(|_| ConfigError::BadValue {
                        key: key.into(),
                        value: value.clone(),
                        reason: "expected true or false",
                    })?
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
        let [e1, e2, e3, g] = energies;
        let params = SystemParams::new(e1, e2, e3, g, gamma).map_err(ConfigError::from_model)?;
        eigenoperator_channels(&params).map_err(ConfigError::from_model)?;
        let baths = BathSet::new(num[Bath::L], num[Bath::M], num[Bath::R]).map_err(ConfigError::from_model)?;
        let out = Self { params, baths, sweep, parallel };
        out.validate_sweep()?;
        Ok(out)
    }

    fn validate_sweep(&self) -> Result<(), ConfigError> {
        let s = &self.sweep;
        let invalid = |key: &str, message: String| ConfigError::Invalid { key: key.into(), message };
        if !(s.from.is_finite() && s.from >= 0.0) {
            return Err(invalid("sweep_from", format!("must be finite and >= 0 (got {})", s.from)));
        }
        if !(s.to.is_finite() && s.to > s.from) {
            return Err(invalid("sweep_to", format!("must be finite and > sweep_from (got {})", s.to)));
        }
        if s.points < 2 {
            return Err(invalid("sweep_points", format!("needs at least 2 points (got {})", s.points)));
        }
        if s.amplification == AmplificationSetting::Auto && s.variable != Bath::M {
            return Err(invalid("amplification", "amplification factors need sweep_var = m".into()));
        }
        Ok(())
    }

    /// Every key with its current value. Parsing the output gives back an
    /// identical configuration.
    pub fn dump(&self) -> String {
        let p = &self.params;
        let t = &self.baths.temperatures;
        let s = &self.sweep;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        put("e1", p.e1.to_string());
        put("e2", p.e2.to_string());
        put("e3", p.e3.to_string());
        put("g", p.g.to_string());
        put("gamma_l", p.gamma[Bath::L].to_string());
        put("gamma_m", p.gamma[Bath::M].to_string());
        put("gamma_r", p.gamma[Bath::R].to_string());
        put("t_l", t[Bath::L].to_string());
        put("t_m", t[Bath::M].to_string());
        put("t_r", t[Bath::R].to_string());
        put("sweep_var", bath_name(s.variable).into());
        put("sweep_from", s.from.to_string());
        put("sweep_to", s.to.to_string());
        put("sweep_points", s.points.to_string());
        put(
            "amplification",
            match s.amplification {
                AmplificationSetting::Off => "off",
                AmplificationSetting::Auto => "auto",
            }
            .into(),
        );
        put("parallel", self.parallel.to_string());
        out
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let s = &self.sweep;
        let mut spec = SweepSpec::new(s.variable, uniform_grid(s.from, s.to, s.points), self.baths, self.params);
        spec.amplification = match s.amplification {
            AmplificationSetting::Off => AmplificationMode::Off,
            AmplificationSetting::Auto => AmplificationMode::Auto,
        };
        spec.parallel = self.parallel;
        spec
    }
}

/// Split `key=value` as given on the command line.
pub fn parse_assignment(text: &str) -> Result<(String, String), ConfigError> {
    text.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ConfigError::Malformed { line: 0, text: text.to_string() })
}
