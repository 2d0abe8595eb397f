//! Operational design domain: named variables with ranges and grid steps.

use serde::{Deserialize, Serialize};

use super::lexer::is_identifier;
use crate::decimal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddVariable {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl OddVariable {
    pub fn new(name: impl Into<String>, min: f64, max: f64, step: f64) -> OddVariable {
        OddVariable { name: name.into(), min, max, step }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    /// Number of whole steps from `min` that stay within `max`.
    pub fn grid_steps(&self) -> u64 {
        ((self.max - self.min) / self.step + 1e-9).floor() as u64
    }

    /// Grid value `min + i * step`, snapped to the step's decimal precision.
    pub fn grid_value(&self, i: u64) -> f64 {
        let places = decimal::places(self.step).max(decimal::places(self.min));
        decimal::round_to(self.min + i as f64 * self.step, places)
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.grid_steps()).map(|i| self.grid_value(i))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OddError {
    #[error("ODD declares no variables")]
    Empty,
    #[error("invalid variable name `{0}`")]
    BadName(String),
    #[error("variable `{0}` declared twice")]
    Duplicate(String),
    #[error("variable `{name}` has min {min} > max {max}")]
    InvertedRange { name: String, min: f64, max: f64 },
    #[error("variable `{name}` must have a positive finite step, got {step}")]
    BadStep { name: String, step: f64 },
    #[error("variable `{0}` has a non-finite bound")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddSpec {
    pub variables: Vec<OddVariable>,
}

impl OddSpec {
    pub fn new(variables: Vec<OddVariable>) -> Result<OddSpec, OddError> {
        let odd = OddSpec { variables };
        odd.validate()?;
        Ok(odd)
    }

    pub fn validate(&self) -> Result<(), OddError> {
        if self.variables.is_empty() {
            return Err(OddError::Empty);
        }
        for (i, v) in self.variables.iter().enumerate() {
            if !is_identifier(&v.name) {
                return Err(OddError::BadName(v.name.clone()));
            }
            if self.variables[..i].iter().any(|o| o.name == v.name) {
                return Err(OddError::Duplicate(v.name.clone()));
            }
            if !v.min.is_finite() || !v.max.is_finite() {
                return Err(OddError::NonFinite(v.name.clone()));
            }
            if v.min > v.max {
                return Err(OddError::InvertedRange { name: v.name.clone(), min: v.min, max: v.max });
            }
            if !(v.step.is_finite() && v.step > 0.0) {
                return Err(OddError::BadStep { name: v.name.clone(), step: v.step });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&OddVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Default driving domain: speed, headway distance, lateral offset.
    pub fn driving_default() -> OddSpec {
        OddSpec {
            variables: vec![
                OddVariable::new("ego_speed", 0.0, 30.0, 0.5),
                OddVariable::new("dist_front", 0.0, 50.0, 0.2),
                OddVariable::new("lane_offset", -2.0, 2.0, 0.1),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_errors() {
        let ok = OddSpec::driving_default();
        assert!(ok.validate().is_ok());
        assert_eq!(OddSpec::new(vec![]), Err(OddError::Empty));
        let dup = OddSpec::new(vec![OddVariable::new("a", 0.0, 1.0, 0.1), OddVariable::new("a", 0.0, 1.0, 0.1)]);
        assert_eq!(dup, Err(OddError::Duplicate("a".into())));
        assert!(matches!(
            OddSpec::new(vec![OddVariable::new("a", 2.0, 1.0, 0.1)]),
            Err(OddError::InvertedRange { .. })
        ));
        assert!(matches!(
            OddSpec::new(vec![OddVariable::new("a", 0.0, 1.0, 0.0)]),
            Err(OddError::BadStep { .. })
        ));
        assert!(matches!(OddSpec::new(vec![OddVariable::new("or", 0.0, 1.0, 1.0)]), Err(OddError::BadName(_))));
    }

    #[test]
    fn grid_is_snapped() {
        let odd = OddSpec::driving_default();
        let dist = odd.get("dist_front").unwrap();
        assert_eq!(dist.grid_steps(), 250);
        assert_eq!(dist.grid_value(21), 4.2);
        assert_eq!(dist.grid_value(250), 50.0);
        let lane = odd.get("lane_offset").unwrap();
        assert_eq!(lane.grid_steps(), 40);
        assert_eq!(lane.grid_value(21), 0.1);
        assert_eq!(lane.grid().count(), 41);
    }
}
