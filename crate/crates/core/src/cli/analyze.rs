//! `analyze`: velocity field, majorant, completeness probes and the Chernoff comparison.

use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Value};

use crate::geometry::{
    boundary_distance_probe, geometric_margins, ray_completeness_with, Classification, CompletenessVerdict,
    MetricField, ProbeResult, RayEnd,
};
use crate::grid::Grid;
use crate::systems::{BoxDomain, CoefficientSystem};
use crate::velocity::{chernoff_c, fattorini_r, majorant, radial_envelope, velocity_matrix, VelocityField};

use super::scenario::{Criterion, Scenario};
use super::{numerical, write_file, CliError, SUMMARY_TXT, VELOCITY_CSV, VERDICT_JSON};

/// One boundary piece (a face, the excluded sphere or a direction to infinity)
/// with the ray verdict along the straight path from the probe.
#[derive(Debug, Clone)]
pub struct Piece {
    pub name: String,
    /// Which one-dimensional criterion the ray test stands for.
    pub rule: &'static str,
    pub verdict: CompletenessVerdict,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub classification: Classification,
    pub probe: Vec<f64>,
    pub pieces: Vec<Piece>,
    pub lattice: Option<ProbeResult>,
    pub field: VelocityField,
    pub json: Value,
    pub summary: String,
}

const SUFFICIENT_NOTE: &str = "Note: completeness of the velocity metric is a sufficient condition for essential \
self-adjointness, not a necessary one. A convergent verdict shows only that this criterion does not apply; the \
operator may still be essentially self-adjoint.";

/// Default probe: the domain centre, or a point between the excluded ball and
/// the window edge when the centre is excluded.
fn default_probe(dom: &BoxDomain) -> Vec<f64> {
    let c = dom.center();
    if dom.contains(&c) {
        return c;
    }
    let mut p = c.clone();
    if let Some(b) = dom.excluded_ball() {
        p[0] = 0.5 * (b.center[0] + b.radius + dom.upper()[0]);
    }
    p
}

fn ray_speed(sys: &CoefficientSystem, criterion: Criterion, x: &[f64]) -> f64 {
    let r = match criterion {
        Criterion::Trace => velocity_matrix(sys, x).map(|m| m.max_eigenvalue().max(0.0).sqrt()),
        Criterion::Norm => chernoff_c(sys, x).map(|b| b.upper),
    };
    r.unwrap_or(f64::NAN)
}

fn failed_piece(name: String, rule: &'static str, criterion: &str, e: impl std::fmt::Display) -> Piece {
    let mut verdict = CompletenessVerdict {
        classification: Classification::Inconclusive,
        criterion: criterion.to_string(),
        cutoffs: Vec::new(),
        integrals: Vec::new(),
        parameters: Default::default(),
    };
    verdict.push_warning(format!("ray probe failed: {e}"));
    Piece { name, rule, verdict }
}

fn axis_name(a: usize) -> String {
    format!("x{}", a + 1)
}

fn ray_pieces(s: &Scenario, sys: &CoefficientSystem, probe: &[f64]) -> Vec<Piece> {
    let dom = sys.domain();
    let d = dom.dim();
    let crit = s.analysis.criterion;
    let label = match crit {
        Criterion::Trace => "trace",
        Criterion::Norm => "norm",
    };
    let count = s.analysis.cutoffs;
    let along = |u: Vec<f64>| move |t: f64| -> Vec<f64> { probe.iter().zip(&u).map(|(p, v)| p + t * v).collect() };
    let mut pieces = Vec::new();
    let boundary_rule = if d == 1 { "one-dimensional line criterion" } else { "boundary-distance criterion" };
    for a in 0..d {
        for side in 0..2 {
            let mut u = vec![0.0; d];
            u[a] = if side == 0 { -1.0 } else { 1.0 };
            let sign = u[a];
            let at = along(u);
            let speed = |t: f64| ray_speed(sys, crit, &at(t));
            if dom.is_bounded_side(a, side) {
                let face = if side == 0 { dom.lower()[a] } else { dom.upper()[a] };
                let name = format!("face {} = {}", axis_name(a), face);
                let len = (face - probe[a]).abs();
                match ray_completeness_with(&speed, 0.0, RayEnd::Finite(len), 0.0, label, count) {
                    Ok(v) => pieces.push(Piece { name, rule: boundary_rule, verdict: v }),
                    Err(e) => pieces.push(failed_piece(name, boundary_rule, label, e)),
                }
            } else {
                let name = format!("{}{} → ∞", if side == 0 { "-" } else { "+" }, axis_name(a));
                let rule = "radial growth criterion";
                // A ray through the excluded ball restarts at the window edge.
                let start = match dom.excluded_ball() {
                    Some(b) if ray_hits_ball(probe, a, sign, &b.center, b.radius) => {
                        let edge = if side == 0 { dom.lower()[a] } else { dom.upper()[a] };
                        (edge - probe[a]).abs()
                    }
                    _ => 0.0,
                };
                match ray_completeness_with(&speed, start, RayEnd::Infinite, 1.0, label, count) {
                    Ok(v) => pieces.push(Piece { name, rule, verdict: v }),
                    Err(e) => pieces.push(failed_piece(name, rule, label, e)),
                }
            }
        }
    }
    if let Some(b) = dom.excluded_ball() {
        let diff: Vec<f64> = b.center.iter().zip(probe).map(|(c, p)| c - p).collect();
        let r = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let name = format!("excluded ball (radius {})", b.radius);
        let rule = "boundary-distance criterion";
        if r > b.radius {
            let at = along(diff.iter().map(|v| v / r).collect());
            let speed = |t: f64| ray_speed(sys, crit, &at(t));
            match ray_completeness_with(&speed, 0.0, RayEnd::Finite(r - b.radius), 0.0, label, count) {
                Ok(v) => pieces.push(Piece { name, rule, verdict: v }),
                Err(e) => pieces.push(failed_piece(name, rule, label, e)),
            }
        }
    }
    pieces
}

/// Whether the axis ray `probe + t·sign·e_a`, `t ≥ 0`, meets the closed ball.
fn ray_hits_ball(probe: &[f64], a: usize, sign: f64, center: &[f64], radius: f64) -> bool {
    let t = (sign * (center[a] - probe[a])).max(0.0);
    let dist2: f64 = (0..probe.len())
        .map(|i| {
            let x = if i == a { probe[i] + sign * t } else { probe[i] };
            (x - center[i]).powi(2)
        })
        .sum();
    dist2 <= radius * radius
}

fn lattice_probe(s: &Scenario, field: &VelocityField, dom: &BoxDomain, probe: &[f64]) -> Result<Option<ProbeResult>, CliError> {
    let Some((dist, _)) = dom.boundary_distance(probe) else { return Ok(None) };
    let grid = &field.grid;
    let h = grid.spacing().iter().copied().fold(0.0, f64::max);
    let hw = (0..grid.len())
        .filter(|&i| field.inside[i])
        .filter_map(|i| dom.boundary_distance(&grid.coord(i)).map(|p| p.0))
        .fold(0.0, f64::max);
    let margins = geometric_margins((0.5 * dist).min(hw), 3.0 * h);
    if margins.len() < 3 {
        return Ok(None);
    }
    let metric = MetricField::from_majorant(field).map_err(numerical)?;
    boundary_distance_probe(&metric, dom, probe, &margins, s.stencil()?).map(Some).map_err(numerical)
}

struct Chernoff {
    lower: f64,
    upper: f64,
    r: f64,
    violations: usize,
    envelope: Option<Vec<(f64, f64)>>,
}

fn chernoff_summary(sys: &CoefficientSystem, grid: &Grid, inside: &[bool]) -> Result<Chernoff, CliError> {
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| inside[i]).collect();
    let stride = (nodes.len() / 512).max(1);
    let d = sys.dim() as f64;
    let mut out = Chernoff { lower: 0.0, upper: 0.0, r: 0.0, violations: 0, envelope: None };
    for &i in nodes.iter().step_by(stride) {
        let x = grid.coord(i);
        let b = chernoff_c(sys, &x).map_err(numerical)?;
        let r = fattorini_r(sys, &x).map_err(numerical)?;
        let tol = 1e-10 * b.upper.max(r).max(1.0);
        if r > b.upper + tol || b.lower > d.sqrt() * r + tol || b.lower > b.upper + tol {
            out.violations += 1;
        }
        out.lower = out.lower.max(b.lower);
        out.upper = out.upper.max(b.upper);
        out.r = out.r.max(r);
    }
    if sys.domain().unbounded().iter().all(|s| s[0] && s[1]) {
        let radii: Vec<f64> = (0..=10).map(|n| 2f64.powi(n)).collect();
        let b = radial_envelope(sys, &radii).map_err(numerical)?;
        out.envelope = Some(radii.into_iter().zip(b).collect());
    }
    Ok(out)
}

fn piece_json(p: &Piece) -> Value {
    let mut v = p.verdict.to_json();
    v["piece"] = json!(p.name);
    v["rule"] = json!(p.rule);
    v
}

/// Run the analysis pipeline without writing files.
pub fn analyze(s: &Scenario) -> Result<AnalysisReport, CliError> {
    let sys = s.build_system()?;
    let dom = sys.domain().clone();
    let grid = s.build_grid()?;
    let probe = s.analysis.probe.clone().unwrap_or_else(|| default_probe(&dom));
    if !dom.contains(&probe) {
        return Err(CliError::Scenario(format!("probe {probe:?} is outside the domain")));
    }
    let sampled = VelocityField::sample(&sys, &grid).map_err(numerical)?;
    let field = majorant(&sampled, s.analysis.delta).map_err(numerical)?;
    let pieces = ray_pieces(s, &sys, &probe);
    let lattice = lattice_probe(s, &field, &dom, &probe)?;
    let chernoff = chernoff_summary(&sys, &grid, &field.inside)?;

    let mut classification = pieces.iter().map(|p| p.verdict.classification).min().unwrap_or(Classification::Inconclusive);
    if let Some(l) = &lattice {
        classification = classification.min(l.verdict.classification);
    }
    let weakest = pieces.iter().min_by_key(|p| p.verdict.classification);

    let mut warnings: Vec<String> = field.warnings.clone();
    for p in &pieces {
        warnings.extend(p.verdict.warnings().into_iter().map(|w| format!("{}: {w}", p.name)));
    }
    if let Some(l) = &lattice {
        warnings.extend(l.verdict.warnings().into_iter().map(|w| format!("lattice probe: {w}")));
        let rays_divergent = pieces.iter().filter(|p| p.rule != "radial growth criterion").all(|p| p.verdict.classification.is_divergent());
        if rays_divergent != l.verdict.classification.is_divergent() {
            warnings.push("ray and lattice probes disagree on divergence".into());
        }
    }
    if chernoff.violations > 0 {
        warnings.push(format!("Chernoff/Fattorini bracket violated at {} sampled nodes", chernoff.violations));
    }

    let json = json!({
        "classification": classification,
        "criterion": "weakest boundary piece",
        "cutoffs": weakest.map(|p| p.verdict.cutoffs.clone()).unwrap_or_default(),
        "integrals": weakest.map(|p| p.verdict.integrals.clone()).unwrap_or_default(),
        "parameters": {
            "system": sys.label(),
            "probe": probe,
            "ray_speed": match s.analysis.criterion { Criterion::Trace => "sqrt(lambda_max(M))", Criterion::Norm => "chernoff upper bound" },
            "majorant_delta": field.delta,
            "eps_reg": field.eps_reg,
            "max_norm_M": field.max_norm(),
            "pieces": pieces.iter().map(piece_json).collect::<Vec<_>>(),
            "lattice": lattice.as_ref().map(|l| json!({
                "verdict": l.verdict.to_json(),
                "layers": l.layers,
            })),
            "chernoff": {
                "max_lower": chernoff.lower,
                "max_upper": chernoff.upper,
                "max_fattorini_r": chernoff.r,
                "bracket_violations": chernoff.violations,
                "radial_envelope": chernoff.envelope,
            },
            "warnings": warnings,
            "seed": super::DEFAULT_SEED,
        }
    });
    let summary = render_summary(s, &sys, classification, &probe, &pieces, lattice.as_ref(), &chernoff, &field, &warnings);
    Ok(AnalysisReport { classification, probe, pieces, lattice, field, json, summary })
}

#[allow(clippy::too_many_arguments)]
fn render_summary(
    s: &Scenario,
    sys: &CoefficientSystem,
    class: Classification,
    probe: &[f64],
    pieces: &[Piece],
    lattice: Option<&ProbeResult>,
    ch: &Chernoff,
    field: &VelocityField,
    warnings: &[String],
) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "system: {} (k = {}, d = {})", sys.label(), sys.k(), sys.dim());
    let _ = writeln!(o, "grid: {:?} nodes, probe {:?}", s.grid.nodes, probe);
    let _ = writeln!(o, "velocity matrix: max |M| = {:.6e}; majorant slack {} (eps_reg {:.3e})", field.max_norm(), field.delta, field.eps_reg);
    let _ = writeln!(o);
    let _ = writeln!(o, "ray probes:");
    for p in pieces {
        let lim = p.verdict.limit().map(|l| format!(", limit ≈ {l:.6}")).unwrap_or_default();
        let _ = writeln!(o, "  {:<28} {:<20} via {}{}", p.name, p.verdict.classification.as_str(), p.rule, lim);
    }
    if let Some(l) = lattice {
        let last = l.layers.last().map(|x| x.1).unwrap_or(f64::NAN);
        let _ = writeln!(o, "lattice boundary probe: {} ({} layers, last distance {:.6})", l.verdict.classification, l.layers.len(), last);
    }
    let _ = writeln!(
        o,
        "Chernoff speed bracket over the grid: lower {:.6}, upper {:.6}; Fattorini r {:.6}",
        ch.lower, ch.upper, ch.r
    );
    if let Some(env) = &ch.envelope {
        let tail: Vec<String> = env.iter().rev().take(3).rev().map(|(r, b)| format!("b({r}) = {b:.4}")).collect();
        let _ = writeln!(o, "radial envelope: {}", tail.join(", "));
    }
    let _ = writeln!(o);
    let _ = writeln!(o, "verdict: {class}");
    let fired: Vec<&str> = {
        let mut v: Vec<&str> = pieces.iter().map(|p| p.rule).collect();
        v.dedup();
        v
    };
    if class.is_divergent() {
        let _ = writeln!(
            o,
            "The velocity metric is complete at every boundary piece ({}). The operator is essentially \
             self-adjoint and disturbances starting inside never reach the boundary.",
            fired.join(", ")
        );
    } else {
        let open: Vec<&str> = pieces.iter().filter(|p| !p.verdict.classification.is_divergent()).map(|p| p.name.as_str()).collect();
        let _ = writeln!(
            o,
            "Completeness is not established: the metric distance to {} stays finite or is undecided.",
            if open.is_empty() { "the boundary layers".to_string() } else { open.join(", ") }
        );
    }
    let _ = writeln!(o, "{SUFFICIENT_NOTE}");
    if !warnings.is_empty() {
        let _ = writeln!(o);
        let _ = writeln!(o, "warnings:");
        for w in warnings {
            let _ = writeln!(o, "  - {w}");
        }
    }
    o
}

/// Run `analyze` and write `velocity.csv`, `verdict.json` and `summary.txt`.
pub fn cmd_analyze(s: &Scenario, strict: bool) -> Result<AnalysisReport, CliError> {
    let report = analyze(s)?;
    let dir = &s.output.dir;
    write_file(dir, VELOCITY_CSV, |w| report.field.write_csv(w))?;
    write_file(dir, VERDICT_JSON, |w| {
        serde_json::to_writer_pretty(&mut *w, &report.json).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    write_file(dir, SUMMARY_TXT, |w| w.write_all(report.summary.as_bytes()))?;
    if strict && report.classification == Classification::Inconclusive {
        return Err(CliError::Inconclusive("analysis could not grade every boundary piece".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn telegraph(c: &str, nodes: usize) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{"system": {{"name": "telegraph", "params": {{"c": "{c}"}}}},
                "domain": {{"lower": [0], "upper": [1]}}, "grid": {{"nodes": [{nodes}]}},
                "output": {{"dir": "unused"}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn degenerate_line_is_divergent() {
        let r = analyze(&telegraph("x*(1-x)", 1024)).unwrap();
        assert_eq!(r.pieces.len(), 2);
        for p in &r.pieces {
            assert_eq!(p.verdict.classification, Classification::CertifiedDivergent, "{}", p.name);
        }
        assert!(r.classification.is_divergent(), "{}\n{:?}\n{:?}", r.summary, r.lattice.as_ref().map(|l| &l.layers), r.lattice.as_ref().map(|l| &l.verdict.parameters));
    }

    #[test]
    fn constant_line_is_convergent() {
        let r = analyze(&telegraph("1", 1024)).unwrap();
        assert_eq!(r.classification, Classification::LikelyConvergent, "{}", r.summary);
        let lim = r.pieces[0].verdict.limit().unwrap();
        assert!((lim - 0.5 / 2f64.sqrt()).abs() < 1e-6, "{lim}");
        assert!(r.summary.contains("sufficient condition"));
    }

    #[test]
    fn verdict_json_keys() {
        let r = analyze(&telegraph("1", 64)).unwrap();
        for k in ["classification", "criterion", "cutoffs", "integrals", "parameters"] {
            assert!(r.json.get(k).is_some(), "{k}");
        }
    }
}
