//! Scenario files: TOML with `[model]`, `[loads]`, `[plasticity]`,
//! `[hardening]`, `[time]`, `[study]` and `[output]` sections.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// A function of position: a constant or polynomial coefficients
/// `c₀ + c₁x + c₂x² + …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Const(f64),
    Poly { poly: Vec<f64> },
}

impl Field {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Field::Const(c) => *c,
            Field::Poly { poly } => poly.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }
}

/// Per-element values (networks) or a field sampled at midpoints (rods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementData {
    Values(Vec<f64>),
    Field(Field),
}

impl ElementData {
    pub fn sample(&self, points: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        match self {
            ElementData::Values(v) if v.len() == points.len() => Ok(v.clone()),
            ElementData::Values(v) => Err(invalid(format!(
                "expected {} element values, found {}",
                points.len(),
                v.len()
            ))),
            ElementData::Field(f) => Ok(points.iter().map(|&x| f.eval(x)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    Displacement,
    Elongation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Model {
    /// Incidence `kinematic` (elements × nodes) and constraint rows.
    Network {
        kinematic: Vec<Vec<f64>>,
        constraint: Vec<Vec<f64>>,
        constraint_kind: ConstraintMode,
        stiffness: Vec<f64>,
    },
    /// Bar on `domain` with both ends displacement-controlled.
    Rod {
        domain: [f64; 2],
        elements: usize,
        stiffness: Field,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loads {
    pub times: Vec<f64>,
    /// Network: `d(t)` at each breakpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prescribed: Option<Vec<Vec<f64>>>,
    /// Network: nodal forces at each breakpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<Vec<Vec<f64>>>,
    /// Rod: end displacements and body-force density at each breakpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<Field>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Plasticity {
    None,
    /// Yield box `lower ≤ σ ≤ upper`.
    Perfect { lower: ElementData, upper: ElementData },
    /// Initial yield offsets; the law lives in `[hardening]`.
    Hardening { lower: ElementData, upper: ElementData },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HardeningLaw {
    Kinematic { modulus: ElementData },
    /// The same piecewise-linear curves `ξ(σ)` for every element.
    Isotropic {
        upper_sigma: Vec<f64>,
        upper_xi: Vec<f64>,
        lower_sigma: Vec<f64>,
        lower_xi: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    pub meshes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Require strain recovery (exit code 4 if it fails).
    #[serde(default)]
    pub strain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: Model,
    pub loads: Loads,
    pub plasticity: Plasticity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardening: Option<HardeningLaw>,
    pub time: TimeBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(default)]
    pub output: Output,
}

fn check_len<T>(what: &str, v: &[T], n: usize) -> Result<(), ScenarioError> {
    if v.len() != n {
        return Err(invalid(format!("{what}: expected {n} entries, found {}", v.len())));
    }
    Ok(())
}

fn check_finite(what: &str, v: &[f64]) -> Result<(), ScenarioError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: non-finite value")));
    }
    Ok(())
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario data is always representable")
    }

    pub fn elements(&self) -> usize {
        match &self.model {
            Model::Network { stiffness, .. } => stiffness.len(),
            Model::Rod { elements, .. } => *elements,
        }
    }

    pub fn is_rod(&self) -> bool {
        matches!(self.model, Model::Rod { .. })
    }

    /// Same scenario on another rod mesh.
    pub fn with_mesh(&self, n: usize) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        match &mut s.model {
            Model::Rod { elements, .. } => *elements = n,
            Model::Network { .. } => return Err(invalid("--mesh applies to rod scenarios only")),
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let times = &self.loads.times;
        if times.is_empty() {
            return Err(invalid("loads.times is empty"));
        }
        check_finite("loads.times", times)?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("load breakpoints must be strictly increasing"));
        }
        let nt = times.len();
        if !(self.time.t_end > times[0]) || !(self.time.dt > 0.0) {
            return Err(invalid("need t_end after the first breakpoint and dt > 0"));
        }
        let l = &self.loads;
        match &self.model {
            Model::Network {
                kinematic,
                constraint,
                stiffness,
                ..
            } => {
                let m = stiffness.len();
                check_len("model.kinematic rows", kinematic, m)?;
                let nodes = kinematic.first().map_or(0, |r| r.len());
                if m == 0 || nodes == 0 || kinematic.iter().any(|r| r.len() != nodes) {
                    return Err(invalid("model.kinematic must be a nonempty rectangular matrix"));
                }
                let width = constraint.first().map_or(0, |r| r.len());
                if constraint.iter().any(|r| r.len() != width) {
                    return Err(invalid("model.constraint must be rectangular"));
                }
                if stiffness.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                    return Err(invalid("stiffness must be positive"));
                }
                let (Some(d), Some(f)) = (&l.prescribed, &l.forces) else {
                    return Err(invalid("network loads need `prescribed` and `forces`"));
                };
                if l.u_a.is_some() || l.u_b.is_some() || l.force.is_some() {
                    return Err(invalid("u_a/u_b/force are rod loads"));
                }
                check_len("loads.prescribed", d, nt)?;
                check_len("loads.forces", f, nt)?;
                for row in d {
                    check_len("loads.prescribed row", row, constraint.len())?;
                    check_finite("loads.prescribed", row)?;
                }
                for row in f {
                    check_len("loads.forces row", row, nodes)?;
                    check_finite("loads.forces", row)?;
                }
            }
            Model::Rod { domain, elements, .. } => {
                if !(domain[1] > domain[0]) || *elements == 0 {
                    return Err(invalid("rod needs domain a < b and at least one element"));
                }
                let (Some(ua), Some(ub), Some(f)) = (&l.u_a, &l.u_b, &l.force) else {
                    return Err(invalid("rod loads need `u_a`, `u_b` and `force`"));
                };
                if l.prescribed.is_some() || l.forces.is_some() {
                    return Err(invalid("prescribed/forces are network loads"));
                }
                check_len("loads.u_a", ua, nt)?;
                check_len("loads.u_b", ub, nt)?;
                check_len("loads.force", f, nt)?;
            }
        }
        let pts = self.sample_points();
        match &self.plasticity {
            Plasticity::None => {}
            Plasticity::Perfect { lower, upper } | Plasticity::Hardening { lower, upper } => {
                let lo = lower.sample(&pts)?;
                let hi = upper.sample(&pts)?;
                if lo.iter().zip(&hi).any(|(l, u)| !(*l < 0.0 && 0.0 < *u)) {
                    return Err(invalid("yield bounds must satisfy σ⁻ < 0 < σ⁺"));
                }
            }
        }
        match (&self.plasticity, &self.hardening) {
            (Plasticity::Hardening { .. }, None) => return Err(invalid("plasticity kind `hardening` needs [hardening]")),
            (Plasticity::Hardening { .. }, Some(HardeningLaw::Kinematic { modulus })) => {
                if modulus.sample(&pts)?.iter().any(|h| !(*h > 0.0)) {
                    return Err(invalid("hardening modulus must be positive"));
                }
            }
            (Plasticity::Hardening { .. }, Some(_)) => {}
            (_, Some(_)) => return Err(invalid("[hardening] requires plasticity kind `hardening`")),
            _ => {}
        }
        if let Some(study) = &self.study {
            if !self.is_rod() {
                return Err(invalid("[study] applies to rod scenarios only"));
            }
            if study.meshes.len() < 2 || study.meshes.contains(&0) {
                return Err(invalid("study needs at least two positive mesh sizes"));
            }
        }
        Ok(())
    }

    /// Element midpoints for rods, element indices for networks.
    pub fn sample_points(&self) -> Vec<f64> {
        match &self.model {
            Model::Network { stiffness, .. } => (0..stiffness.len()).map(|j| j as f64).collect(),
            Model::Rod { domain, elements, .. } => {
                let h = (domain[1] - domain[0]) / *elements as f64;
                (0..*elements).map(|j| domain[0] + (j as f64 + 0.5) * h).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROD: &str = r#"
[model]
kind = "rod"
domain = [-1, 1]
elements = 10
stiffness = 1

[loads]
times = [0, 1, 3]
u_a = [0, 0, 0]
u_b = [0, 0, 2]
force = [0, { poly = [0, 2] }, { poly = [0, 2] }]

[plasticity]
kind = "perfect"
lower = -1
upper = 1

[time]
t_end = 3
dt = 0.001
"#;

    #[test]
    fn rod_parses() {
        let s = Scenario::parse(ROD).unwrap();
        assert_eq!(s.elements(), 10);
        let Loads { force: Some(f), .. } = &s.loads else { panic!() };
        assert_eq!(f[1].eval(0.5), 1.0);
        assert_eq!(s.sample_points()[0], -0.9);
    }

    #[test]
    fn round_trip() {
        let s = Scenario::parse(ROD).unwrap();
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unsorted_breakpoints_rejected() {
        let bad = ROD.replace("times = [0, 1, 3]", "times = [0, 3, 1]");
        assert!(matches!(Scenario::parse(&bad), Err(ScenarioError::Invalid(_))));
        let bad = ROD.replace("lower = -1", "lower = 0.5");
        assert!(matches!(Scenario::parse(&bad), Err(ScenarioError::Invalid(_))));
        let bad = ROD.replace("kind = \"rod\"", "kind = \"truss\"");
        assert!(matches!(Scenario::parse(&bad), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn polynomial_field() {
        let f = Field::Poly { poly: vec![1.0, 0.0, -1.0] };
        assert_eq!(f.eval(0.5), 0.75);
    }
}
