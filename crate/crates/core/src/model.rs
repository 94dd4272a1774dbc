//! Records, scenarios, and mechanism configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CellId;

/// One individual's datum. Fields are private; constructors enforce the
/// per-variant invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    cell: CellId,
    value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    /// Category `index` out of `k`.
    Categorical { index: u32, k: u32 },
    Boolean(bool),
    /// 1-based rank out of `levels`.
    Rank { rank: u32, levels: u32 },
    Float { value: f64, lo: f64, hi: f64 },
}

impl Value {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Value::Categorical { index, k } => {
                if k < 2 {
                    return Err(Error::InvalidRecord(format!("k = {k} must be >= 2")));
                }
                if index >= k {
                    return Err(Error::InvalidRecord(format!("category {index} out of range 0..{k}")));
                }
            }
            Value::Boolean(_) => {}
            Value::Rank { rank, levels } => {
                if levels < 2 {
                    return Err(Error::InvalidRecord(format!("m = {levels} must be >= 2")));
                }
                if rank == 0 || rank > levels {
                    return Err(Error::InvalidRecord(format!("rank {rank} out of range 1..={levels}")));
                }
            }
            Value::Float { value, lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidRecord(format!("bad float range [{lo}, {hi}]")));
                }
                if !(lo..=hi).contains(&value) {
                    return Err(Error::InvalidRecord(format!("{value} outside [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> ScenarioKind {
        match self {
            Value::Categorical { .. } => ScenarioKind::OneHot,
            Value::Boolean(_) => ScenarioKind::Boolean,
            Value::Rank { .. } => ScenarioKind::Ranking,
            Value::Float { .. } => ScenarioKind::Income,
        }
    }
}

impl Record {
    pub fn new(cell: CellId, value: Value) -> Result<Self> {
        value.validate()?;
        Ok(Self { cell, value })
    }

    pub fn categorical(cell: CellId, index: u32, k: u32) -> Result<Self> {
        Self::new(cell, Value::Categorical { index, k })
    }

    pub fn boolean(cell: CellId, b: bool) -> Self {
        Self { cell, value: Value::Boolean(b) }
    }

    pub fn rank(cell: CellId, rank: u32, levels: u32) -> Result<Self> {
        Self::new(cell, Value::Rank { rank, levels })
    }

    pub fn float(cell: CellId, value: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(cell, Value::Float { value, lo, hi })
    }

    pub fn cell(&self) -> CellId {
        self.cell
    }

    pub fn value(&self) -> &Value {
        &self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[serde(rename = "onehot", alias = "one_hot", alias = "categorical")]
    OneHot,
    Boolean,
    #[serde(alias = "rank")]
    Ranking,
    #[serde(alias = "float")]
    Income,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::OneHot,
        ScenarioKind::Boolean,
        ScenarioKind::Ranking,
        ScenarioKind::Income,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::OneHot => "onehot",
            ScenarioKind::Boolean => "boolean",
            ScenarioKind::Ranking => "ranking",
            ScenarioKind::Income => "income",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "onehot" | "one_hot" | "one-hot" | "categorical" => Ok(ScenarioKind::OneHot),
            "boolean" | "bool" => Ok(ScenarioKind::Boolean),
            "ranking" | "rank" => Ok(ScenarioKind::Ranking),
            "income" | "float" => Ok(ScenarioKind::Income),
            other => Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    #[serde(alias = "rr")]
    RandomizedResponse,
    Exponential,
    Gaussian,
    None,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::RandomizedResponse,
        MechanismKind::Exponential,
        MechanismKind::Gaussian,
        MechanismKind::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismKind::RandomizedResponse => "randomized_response",
            MechanismKind::Exponential => "exponential",
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::None => "none",
        }
    }

    /// Whether this mechanism may perturb records of `scenario`.
    pub fn admissible_for(&self, scenario: ScenarioKind) -> bool {
        use MechanismKind::*;
        use ScenarioKind::*;
        matches!(
            (scenario, self),
            (_, None)
                | (OneHot, RandomizedResponse)
                | (Boolean, RandomizedResponse)
                | (Ranking, Exponential)
                | (Ranking, RandomizedResponse)
                | (Income, Gaussian)
        )
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rr" | "randomized_response" | "randomized-response" => Ok(MechanismKind::RandomizedResponse),
            "exponential" | "exp" => Ok(MechanismKind::Exponential),
            "gaussian" => Ok(MechanismKind::Gaussian),
            "none" => Ok(MechanismKind::None),
            other => Err(Error::InvalidConfig(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Admissible `(scenario, mechanism)` pairs, `None` included.
pub fn admissibility_table() -> Vec<(ScenarioKind, Vec<MechanismKind>)> {
    ScenarioKind::ALL
        .iter()
        .map(|&s| {
            let mechs = MechanismKind::ALL
                .iter()
                .copied()
                .filter(|m| m.admissible_for(s))
                .collect();
            (s, mechs)
        })
        .collect()
}

/// Mechanism plus its privacy parameters. `epsilon` is `+inf` exactly when
/// `kind` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    #[serde(with = "crate::extended_float")]
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "unit_sensitivity")]
    pub sensitivity: f64,
}

fn unit_sensitivity() -> f64 {
    1.0
}

impl MechanismConfig {
    pub fn none() -> Self {
        Self {
            kind: MechanismKind::None,
            epsilon: f64::INFINITY,
            delta: 0.0,
            sensitivity: 1.0,
        }
    }

    pub fn randomized_response(epsilon: f64) -> Result<Self> {
        Self::pure(MechanismKind::RandomizedResponse, epsilon)
    }

    /// Exponential mechanism with unit utility sensitivity.
    pub fn exponential(epsilon: f64) -> Result<Self> {
        Self::pure(MechanismKind::Exponential, epsilon)
    }

    pub fn gaussian(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        let cfg = Self {
            kind: MechanismKind::Gaussian,
            epsilon,
            delta,
            sensitivity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn pure(kind: MechanismKind, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            kind,
            epsilon,
            delta: 0.0,
            sensitivity: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == MechanismKind::None {
            if self.epsilon != f64::INFINITY {
                return Err(Error::InvalidMechanism("mechanism none requires epsilon = inf".into()));
            }
            return Ok(());
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return Err(Error::InvalidSensitivity(self.sensitivity));
        }
        match self.kind {
            MechanismKind::Gaussian => {
                if self.epsilon == 0.0 {
                    return Err(Error::InvalidEpsilon(self.epsilon));
                }
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    return Err(Error::InvalidDelta(self.delta));
                }
            }
            _ => {
                if self.delta != 0.0 {
                    return Err(Error::InvalidMechanism(format!(
                        "{} is pure epsilon-DP and takes no delta",
                        self.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_invariants() {
        let c = CellId::new(0, 0);
        assert!(Record::categorical(c, 2, 3).is_ok());
        assert!(Record::categorical(c, 3, 3).is_err());
        assert!(Record::categorical(c, 0, 1).is_err());
        assert!(Record::rank(c, 1, 2).is_ok());
        assert!(Record::rank(c, 0, 5).is_err());
        assert!(Record::rank(c, 6, 5).is_err());
        assert!(Record::rank(c, 1, 1).is_err());
        assert!(Record::float(c, 0.5, 0.0, 1.0).is_ok());
        assert!(Record::float(c, 1.5, 0.0, 1.0).is_err());
        assert!(Record::float(c, 0.5, 1.0, 1.0).is_err());
        assert!(Record::float(c, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn admissibility() {
        use MechanismKind::*;
        assert!(RandomizedResponse.admissible_for(ScenarioKind::OneHot));
        assert!(!Gaussian.admissible_for(ScenarioKind::Boolean));
        assert!(Exponential.admissible_for(ScenarioKind::Ranking));
        assert!(RandomizedResponse.admissible_for(ScenarioKind::Ranking));
        assert!(!Exponential.admissible_for(ScenarioKind::Income));
        for s in ScenarioKind::ALL {
            assert!(None.admissible_for(s));
        }
        let total: usize = admissibility_table().iter().map(|(_, m)| m.len()).sum();
        assert_eq!(total, 9);
    }

    #[test]
    fn mechanism_config_rules() {
        assert!(MechanismConfig::none().validate().is_ok());
        let mut bad = MechanismConfig::none();
        bad.epsilon = 1.0;
        assert!(bad.validate().is_err());
        assert!(MechanismConfig::randomized_response(0.0).is_ok());
        assert!(MechanismConfig::randomized_response(-1.0).is_err());
        assert!(MechanismConfig::randomized_response(f64::INFINITY).is_err());
        assert!(MechanismConfig::gaussian(1.0, 0.0, 1.0).is_err());
        assert!(MechanismConfig::gaussian(1.0, 1.5e-7, 1.0).is_ok());
        assert!(MechanismConfig::gaussian(0.0, 1.5e-7, 1.0).is_err());
        assert!(MechanismConfig::gaussian(1.0, 1.5e-7, 0.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in ScenarioKind::ALL {
            assert_eq!(s.as_str().parse::<ScenarioKind>().unwrap(), s);
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<ScenarioKind>(&j).unwrap(), s);
        }
        for m in MechanismKind::ALL {
            assert_eq!(m.as_str().parse::<MechanismKind>().unwrap(), m);
        }
        assert_eq!("rr".parse::<MechanismKind>().unwrap(), MechanismKind::RandomizedResponse);
        let cfg: MechanismConfig =
            serde_json::from_str(r#"{"kind":"none","epsilon":"inf"}"#).unwrap();
        assert_eq!(cfg, MechanismConfig::none());
    }
}
