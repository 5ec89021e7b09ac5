//! Scenario files: JSON description of a system, its domain, grid and run parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dsl::ScalarField;
use crate::geometry::Stencil;
use crate::grid::{Grid, MIN_NODES};
use crate::systems::{
    custom, dirac_free, elastic, elastic_isotropic, maxwell_anisotropic, maxwell_isotropic, telegraph, BoxDomain,
    CoefficientSystem, CustomSpec, StiffnessTensor,
};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    pub domain: DomainSection,
    pub grid: GridSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

/// Per-axis unboundedness: one flag for both sides or `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Unbounded {
    Both(bool),
    Sides([bool; 2]),
}

impl Unbounded {
    fn sides(self) -> [bool; 2] {
        match self {
            Unbounded::Both(b) => [b, b],
            Unbounded::Sides(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub unbounded: Vec<Unbounded>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Ray speed `√λ_max(M)`.
    Trace,
    /// Ray speed `sup_{|ξ|=1} ‖Σ ξ_j Ã^j‖` (upper bracket).
    Norm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: usize,
    #[serde(default = "default_stencil")]
    pub stencil: String,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    /// Interior probe point; defaults to the domain centre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<f64>>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_cutoffs() -> usize {
    crate::geometry::CUTOFFS
}

fn default_stencil() -> String {
    "standard".into()
}

fn default_criterion() -> Criterion {
    Criterion::Trace
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            delta: default_delta(),
            cutoffs: default_cutoffs(),
            stencil: default_stencil(),
            criterion: default_criterion(),
            probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub pulse: Pulse,
    /// Spatial order, 2 or 4.
    #[serde(default = "default_order")]
    pub order: u8,
}

fn default_cfl() -> f64 {
    0.4
}

fn default_order() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    /// Read a scenario; a relative output directory resolves against the file's folder.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text).map_err(|e| e.context(&path.display().to_string()))?;
        if s.output.dir.is_relative() {
            if let Some(parent) = path.parent() {
                s.output.dir = parent.join(&s.output.dir);
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Scenario(m));
        let d = self.domain.lower.len();
        if self.grid.nodes.len() != d {
            return bad(format!("grid.nodes has {} axes, domain has {d}", self.grid.nodes.len()));
        }
        if let Some(&n) = self.grid.nodes.iter().find(|&&n| n < MIN_NODES) {
            return bad(format!("grid resolution {n} is below the minimum of {MIN_NODES} per axis"));
        }
        if !(self.analysis.delta > 0.0 && self.analysis.delta < 1.0) {
            return bad(format!("analysis.delta must lie in (0, 1), got {}", self.analysis.delta));
        }
        self.stencil()?;
        let dom = self.build_domain()?;
        if let Some(p) = &self.analysis.probe {
            if !dom.contains(p) {
                return bad(format!("analysis.probe {p:?} is outside the domain"));
            }
        }
        if let Some(sim) = &self.simulate {
            if !(sim.t_final >= 0.0) || !(sim.cfl > 0.0 && sim.cfl <= 1.0) || !(sim.pulse.sigma > 0.0) {
                return bad("simulate needs T ≥ 0, cfl in (0, 1] and sigma > 0".into());
            }
            if sim.order != 2 && sim.order != 4 {
                return bad(format!("simulate.order must be 2 or 4, got {}", sim.order));
            }
            if sim.pulse.center.len() != d {
                return bad("pulse centre dimension does not match the domain".into());
            }
            let grid = self.build_grid()?;
            for a in 0..d {
                let margin = 4.0 * grid.spacing()[a];
                let c = sim.pulse.center[a];
                let lo = dom.lower()[a] + margin;
                let hi = dom.upper()[a] - margin;
                if c < lo || c > hi {
                    return bad(format!("pulse centre {c} on axis {} lies within 4 nodes of the domain edge", a + 1));
                }
            }
            if !dom.contains(&sim.pulse.center) {
                return bad("pulse centre lies outside the domain".into());
            }
        }
        self.build_system()?;
        Ok(())
    }

    pub fn stencil(&self) -> Result<Stencil, CliError> {
        match self.analysis.stencil.as_str() {
            "standard" => Ok(Stencil::Standard),
            "extended" => Ok(Stencil::Extended),
            s => Err(CliError::Scenario(format!("unknown stencil `{s}` (expected standard or extended)"))),
        }
    }

    pub fn build_domain(&self) -> Result<BoxDomain, CliError> {
        let d = self.domain.lower.len();
        let unb: Vec<[bool; 2]> = if self.domain.unbounded.is_empty() {
            vec![[false, false]; d]
        } else {
            self.domain.unbounded.iter().map(|u| u.sides()).collect()
        };
        let mut dom = BoxDomain::new(self.domain.lower.clone(), self.domain.upper.clone(), unb)
            .map_err(|e| CliError::Scenario(e.to_string()))?;
        if self.system.name == "dirac" {
            let r = self.number("radius", Some(0.1))?;
            dom = dom.with_excluded_ball(vec![0.0; d], r).map_err(|e| CliError::Scenario(e.to_string()))?;
        }
        Ok(dom)
    }

    pub fn build_grid(&self) -> Result<Grid, CliError> {
        Grid::cell_centered(&self.build_domain()?, &self.grid.nodes).map_err(|e| CliError::Scenario(e.to_string()))
    }

    fn param(&self, key: &str) -> Option<&Value> {
        self.system.params.get(key)
    }

    fn expr(&self, key: &str, default: Option<&str>) -> Result<String, CliError> {
        match self.param(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(v) => Err(CliError::Scenario(format!("system.params.{key}: expected an expression, got {v}"))),
            None => default
                .map(str::to_string)
                .ok_or_else(|| CliError::Scenario(format!("system.params.{key} is required for `{}`", self.system.name))),
        }
    }

    fn exprs(&self, key: &str) -> Result<Vec<String>, CliError> {
        match self.param(key) {
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    v => Err(CliError::Scenario(format!("system.params.{key}: expected expressions, got {v}"))),
                })
                .collect(),
            Some(_) => Ok(vec![self.expr(key, None)?]),
            None => Err(CliError::Scenario(format!("system.params.{key} is required for `{}`", self.system.name))),
        }
    }

    fn number(&self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        match self.param(key) {
            Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
            Some(v) => Err(CliError::Scenario(format!("system.params.{key}: expected a number, got {v}"))),
            None => default.ok_or_else(|| CliError::Scenario(format!("system.params.{key} is required"))),
        }
    }

    fn allow_params(&self, keys: &[&str]) -> Result<(), CliError> {
        for k in self.system.params.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(CliError::Scenario(format!(
                    "unknown parameter `{k}` for system `{}` (expected one of {keys:?})",
                    self.system.name
                )));
            }
        }
        Ok(())
    }

    /// Construct the coefficient system named in the scenario.
    ///
    /// Telegraph takes `L` and `C`, or a speed `c` (then `L = C = 1/c`).
    /// Maxwell takes `eps` and `mu` as one expression or 6/9 tensor entries.
    /// Elastic takes `rho` with `K` and `mu`, or `stiffness` (21 or 36 entries).
    /// Dirac takes `radius`; its window is the domain box.
    /// Custom takes `k`, `energy`, `flux` (one k×k list per axis) and optional `potential`.
    pub fn build_system(&self) -> Result<CoefficientSystem, CliError> {
        let dom = self.build_domain()?;
        let sys_err = |e: crate::systems::SystemError| CliError::Scenario(format!("system: {e}"));
        match self.system.name.as_str() {
            "telegraph" => {
                self.allow_params(&["L", "C", "c"])?;
                if self.param("c").is_some() {
                    if self.param("L").is_some() || self.param("C").is_some() {
                        return Err(CliError::Scenario("telegraph takes either `c` or `L` and `C`".into()));
                    }
                    let c = self.expr("c", None)?;
                    let z = format!("1/({c})");
                    telegraph(&z, &z, dom).map_err(sys_err)
                } else {
                    telegraph(&self.expr("L", None)?, &self.expr("C", None)?, dom).map_err(sys_err)
                }
            }
            "maxwell" => {
                self.allow_params(&["eps", "mu"])?;
                let (eps, mu) = (self.exprs("eps")?, self.exprs("mu")?);
                if eps.len() == 1 && mu.len() == 1 {
                    maxwell_isotropic(&eps[0], &mu[0], dom).map_err(sys_err)
                } else {
                    let widen = |v: Vec<String>| if v.len() == 1 { vec![v[0].clone(), "0".into(), "0".into(), v[0].clone(), "0".into(), v[0].clone()] } else { v };
                    maxwell_anisotropic(&widen(eps), &widen(mu), dom).map_err(sys_err)
                }
            }
            "elastic" => {
                self.allow_params(&["rho", "K", "mu", "stiffness"])?;
                let rho = self.expr("rho", Some("1"))?;
                if self.param("stiffness").is_some() {
                    let entries = self.exprs("stiffness")?;
                    let c = match entries.len() {
                        21 => StiffnessTensor::from_upper(&entries),
                        36 => StiffnessTensor::from_full(&entries),
                        n => return Err(CliError::Scenario(format!("stiffness needs 21 or 36 entries, got {n}"))),
                    }
                    .map_err(sys_err)?;
                    elastic(&rho, c, dom).map_err(sys_err)
                } else {
                    elastic_isotropic(&rho, &self.expr("K", None)?, &self.expr("mu", None)?, dom).map_err(sys_err)
                }
            }
            "dirac" => {
                self.allow_params(&["radius"])?;
                let r = self.number("radius", Some(0.1))?;
                let w = self.domain.upper.first().copied().unwrap_or(0.0);
                let symmetric = self.domain.lower.len() == 3
                    && self.domain.lower.iter().chain(&self.domain.upper).all(|v| v.abs() == w);
                if !symmetric || !dom.unbounded().iter().all(|s| s[0] && s[1]) {
                    return Err(CliError::Scenario(
                        "dirac needs an unbounded 3-D domain with a symmetric cubic window [-w, w]^3".into(),
                    ));
                }
                dirac_free(r, w).map_err(sys_err)
            }
            "custom" => {
                self.allow_params(&["k", "energy", "flux", "potential"])?;
                let k = self.number("k", None)?;
                if !(k >= 1.0 && k <= 16.0 && k.fract() == 0.0) {
                    return Err(CliError::Scenario(format!("custom k must be an integer in 1..=16, got {k}")));
                }
                let flux = match self.param("flux") {
                    Some(Value::Array(rows)) => rows
                        .iter()
                        .map(|r| match r {
                            Value::Array(_) => {
                                serde_json::from_value::<Vec<Value>>(r.clone()).map_err(|e| CliError::Scenario(e.to_string()))
                            }
                            _ => Err(CliError::Scenario("custom flux must be a list of matrices".into())),
                        })
                        .map(|r| r.and_then(|vals| vals.iter().map(value_expr).collect::<Result<Vec<_>, _>>()))
                        .collect::<Result<Vec<_>, _>>()?,
                    _ => return Err(CliError::Scenario("custom flux must be a list of matrices".into())),
                };
                let potential = if self.param("potential").is_some() { Some(self.exprs("potential")?) } else { None };
                let spec = CustomSpec { k: k as usize, energy: self.exprs("energy")?, flux, potential };
                custom(&spec, dom).map_err(sys_err)
            }
            other => Err(CliError::Scenario(format!(
                "unknown system `{other}` (expected telegraph, maxwell, elastic, dirac or custom)"
            ))),
        }
    }

    /// Parse every expression parameter; used to fail fast with the offending text.
    pub fn parsed_expressions(&self) -> Result<Vec<ScalarField>, CliError> {
        let mut out = Vec::new();
        for (k, v) in &self.system.params {
            let mut push = |s: &str| {
                ScalarField::parse(s)
                    .map(|f| out.push(f))
                    .map_err(|e| CliError::Scenario(format!("system.params.{k}: `{s}`: {e}")))
            };
            match v {
                Value::String(s) => push(s)?,
                Value::Array(a) => {
                    for x in a {
                        if let Value::String(s) = x {
                            push(s)?;
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

fn value_expr(v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        v => Err(CliError::Scenario(format!("expected an expression, got {v}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(system: &str) -> String {
        format!(
            r#"{{"system": {system}, "domain": {{"lower": [0], "upper": [1]}}, "grid": {{"nodes": [64]}}, "output": {{"dir": "out"}}}}"#
        )
    }

    #[test]
    fn telegraph_speed_form() {
        let s = Scenario::from_json(&base(r#"{"name": "telegraph", "params": {"c": "x*(1-x)"}}"#)).unwrap();
        let sys = s.build_system().unwrap();
        let m = crate::velocity::velocity_matrix(&sys, &[0.5]).unwrap();
        assert!((m.get(0, 0) - 2.0 * 0.0625).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = base(r#"{"name": "telegraph", "params": {"L": "1", "C": "1"}}"#).replace("\"grid\"", "\"grdi\"");
        assert!(Scenario::from_json(&text).is_err());
        let text = base(r#"{"name": "telegraph", "params": {"L": "1", "C": "1"}, "extra": 1}"#);
        assert!(Scenario::from_json(&text).is_err());
        let text = base(r#"{"name": "telegraph", "params": {"L": "1", "Q": "1"}}"#);
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn bad_expression_is_a_scenario_error() {
        let e = Scenario::from_json(&base(r#"{"name": "telegraph", "params": {"L": "2x", "C": "1"}}"#)).unwrap_err();
        assert!(matches!(e, CliError::Scenario(_)));
        assert!(e.to_string().contains("2x"), "{e}");
    }

    #[test]
    fn resolution_floor() {
        let text = base(r#"{"name": "telegraph", "params": {"L": "1", "C": "1"}}"#).replace("[64]", "[4]");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn pulse_margin() {
        let mut s = Scenario::from_json(&base(r#"{"name": "telegraph", "params": {"L": "1", "C": "1"}}"#)).unwrap();
        s.simulate = Some(SimulateSection {
            t_final: 1.0,
            cfl: 0.4,
            pulse: Pulse { center: vec![0.02], sigma: 0.01, components: vec![1.0, 0.0] },
            order: 2,
        });
        assert!(Scenario::from_json(&s.to_json()).is_err());
        s.simulate.as_mut().unwrap().pulse.center = vec![0.5];
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn dirac_domain() {
        let text = r#"{"system": {"name": "dirac", "params": {"radius": 0.1}},
            "domain": {"lower": [-2, -2, -2], "upper": [2, 2, 2], "unbounded": [true, true, true]},
            "grid": {"nodes": [16, 16, 16]}, "output": {"dir": "o"}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(s.build_system().unwrap().domain().excluded_ball().is_some());
    }
}
