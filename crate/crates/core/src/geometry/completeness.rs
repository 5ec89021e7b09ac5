//! Graded divergence tests for `∫ dt / s(t)` along a ray.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::GeometryError;

/// Number of cutoffs `T_1..T_N` approaching the far end.
pub const CUTOFFS: usize = 24;
/// Tail samples used by the fits.
const TAIL: usize = 10;
/// Largest tail slope of `log(w/s)` still read as "non-increasing".
const SLOPE_TOL: f64 = 1e-4;
const FIT_RESIDUAL: f64 = 0.01;
const RATIO_SPLIT: f64 = 0.95;
const QUAD_TOL: f64 = 1e-10;
const QUAD_DEPTH: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    LikelyConvergent,
    Inconclusive,
    LikelyDivergent,
    CertifiedDivergent,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::CertifiedDivergent => "certified-divergent",
            Classification::LikelyDivergent => "likely-divergent",
            Classification::LikelyConvergent => "likely-convergent",
            Classification::Inconclusive => "inconclusive",
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Classification::CertifiedDivergent | Classification::LikelyDivergent)
    }

    pub fn is_convergent(self) -> bool {
        self == Classification::LikelyConvergent
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a completeness probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessVerdict {
    pub classification: Classification,
    pub criterion: String,
    pub cutoffs: Vec<f64>,
    pub integrals: Vec<f64>,
    pub parameters: BTreeMap<String, Value>,
}

impl CompletenessVerdict {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("verdict serialises")
    }

    pub fn limit(&self) -> Option<f64> {
        self.parameters.get("limit").and_then(Value::as_f64)
    }

    pub fn warnings(&self) -> Vec<String> {
        match self.parameters.get("warnings") {
            Some(Value::Array(a)) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn push_warning(&mut self, w: impl Into<String>) {
        let entry = self.parameters.entry("warnings".into()).or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(a) = entry {
            a.push(Value::String(w.into()));
        }
    }
}

/// Far end of the integration ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayEnd {
    Finite(f64),
    Infinite,
}

/// Analytic answer for `s(δ) = δ^p` near `δ = 0`: divergent iff `p ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerLaw {
    Divergent,
    Convergent,
}

pub fn power_law_classify(p: f64) -> PowerLaw {
    if p >= 1.0 {
        PowerLaw::Divergent
    } else {
        PowerLaw::Convergent
    }
}

struct Simpson<'a> {
    f: &'a dyn Fn(f64) -> Result<f64, GeometryError>,
    capped: bool,
}

impl Simpson<'_> {
    fn integrate(&mut self, a: f64, b: f64) -> Result<f64, GeometryError> {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = ((self.f)(a)?, (self.f)(m)?, (self.f)(b)?);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.step(a, b, fa, fm, fb, whole, QUAD_TOL * whole.abs().max(1e-300), QUAD_DEPTH)
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> Result<f64, GeometryError> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = ((self.f)(lm)?, (self.f)(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            self.capped = true;
            return Ok(left + right + err / 15.0);
        }
        Ok(self.step(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + self.step(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
}

/// Least-squares line `y = a + b x`; returns `(b, rms residual)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum::<f64>() / n).sqrt();
    (b, rms)
}

/// Ratio-based grading of a nondecreasing partial-sum sequence; shared with the
/// boundary-distance probe. Returns the class and the extrapolated limit.
pub(crate) fn grade_increments(values: &[f64], params: &mut BTreeMap<String, Value>) -> Classification {
    let n = values.len();
    let tail = &values[n.saturating_sub(TAIL + 1)..];
    let inc: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = values.last().copied().unwrap_or(0.0).abs().max(1e-300);
    if inc.iter().all(|&d| d <= 1e-15 * scale) {
        params.insert("limit".into(), json!(values[n - 1]));
        params.insert("ratio_max".into(), json!(0.0));
        return Classification::LikelyConvergent;
    }
    let ratios: Vec<f64> = inc
        .windows(2)
        .filter(|w| w[0] > 1e-15 * scale)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return Classification::Inconclusive;
    }
    let rmax = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    params.insert("ratio_max".into(), json!(rmax));
    params.insert("ratio_min".into(), json!(rmin));
    if rmax <= RATIO_SPLIT {
        let k = ratios.len().min(4);
        let rbar = ratios[ratios.len() - k..].iter().sum::<f64>() / k as f64;
        let last = inc[inc.len() - 1];
        params.insert("limit".into(), json!(values[n - 1] + last * rbar / (1.0 - rbar)));
        Classification::LikelyConvergent
    } else if rmin >= RATIO_SPLIT {
        Classification::LikelyDivergent
    } else {
        Classification::Inconclusive
    }
}

/// Grade `∫ dt / s(t)` from `start` toward `end` (either direction).
///
/// Cutoffs are `T_n = end - (end - start) 2^{-n}` for a finite end and
/// `T_n = start ± a (2^n - 1)`, `a = max(|start|, 1)`, for an infinite one.
/// The tail model `g = w/s` (with `w` the distance to the end, or `|t - start| + a`
/// toward infinity) certifies divergence when it is a clean non-decreasing power
/// law in `n`; otherwise the geometric decay of the shell increments decides.
pub fn ray_completeness(
    speed: &dyn Fn(f64) -> f64,
    start: f64,
    end: RayEnd,
    direction: f64,
    criterion: &str,
) -> Result<CompletenessVerdict, GeometryError> {
    ray_completeness_with(speed, start, end, direction, criterion, CUTOFFS)
}

/// As [`ray_completeness`] with `count` cutoffs (at least 12).
pub fn ray_completeness_with(
    speed: &dyn Fn(f64) -> f64,
    start: f64,
    end: RayEnd,
    direction: f64,
    criterion: &str,
    count: usize,
) -> Result<CompletenessVerdict, GeometryError> {
    if count < TAIL + 2 || count > 60 {
        return Err(GeometryError::BadInterval(format!("cutoff count must lie in {}..=60, got {count}", TAIL + 2)));
    }
    if !start.is_finite() {
        return Err(GeometryError::BadInterval(format!("start {start} must be finite")));
    }
    let dir = match end {
        RayEnd::Finite(e) => {
            if !e.is_finite() || e == start {
                return Err(GeometryError::BadInterval(format!("end {e} must be finite and differ from start")));
            }
            (e - start).signum()
        }
        RayEnd::Infinite => {
            if direction == 0.0 {
                return Err(GeometryError::BadInterval("direction toward infinity must be ±1".into()));
            }
            direction.signum()
        }
    };
    let a = start.abs().max(1.0);
    let cutoff = |n: usize| match end {
        RayEnd::Finite(e) => e - (e - start) * 0.5f64.powi(n as i32),
        RayEnd::Infinite => start + dir * a * (2f64.powi(n as i32) - 1.0),
    };
    let w = |t: f64| match end {
        RayEnd::Finite(e) => (e - t).abs(),
        RayEnd::Infinite => (t - start).abs() + a,
    };
    let checked = |t: f64| -> Result<f64, GeometryError> {
        let s = speed(t);
        if !(s > 0.0) || !s.is_finite() {
            return Err(GeometryError::SpeedNotPositive { t, value: s });
        }
        Ok(1.0 / s)
    };
    let mut quad = Simpson { f: &checked, capped: false };
    let mut cutoffs = Vec::with_capacity(count);
    let mut integrals = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut prev = start;
    let mut g = Vec::with_capacity(count);
    for n in 1..=count {
        let t = cutoff(n);
        acc += quad.integrate(prev.min(t), prev.max(t))?;
        prev = t;
        cutoffs.push(t);
        integrals.push(acc);
        g.push((w(t) * checked(t)?).ln());
    }
    let mut params = BTreeMap::new();
    params.insert("start".into(), json!(start));
    params.insert(
        "end".into(),
        match end {
            RayEnd::Finite(e) => json!(e),
            RayEnd::Infinite => json!(if dir > 0.0 { "+inf" } else { "-inf" }),
        },
    );
    let xs: Vec<f64> = (count - TAIL + 1..=count).map(|n| n as f64 * std::f64::consts::LN_2).collect();
    let (slope, rms) = linear_fit(&xs, &g[count - TAIL..]);
    params.insert("tail_slope".into(), json!(slope));
    params.insert("tail_fit_rms".into(), json!(rms));
    let mut verdict = CompletenessVerdict {
        classification: Classification::Inconclusive,
        criterion: criterion.to_string(),
        cutoffs,
        integrals,
        parameters: params,
    };
    if quad.capped {
        verdict.push_warning("adaptive quadrature hit its depth limit");
        return Ok(verdict);
    }
    verdict.classification = if slope >= -SLOPE_TOL && rms < FIT_RESIDUAL {
        Classification::CertifiedDivergent
    } else {
        grade_increments(&verdict.integrals.clone(), &mut verdict.parameters)
    };
    Ok(verdict)
}
