//! `distance` and `simulate`.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;

use crate::evolve::{integrate, DiscreteOperator, EvolutionResult, EvolveOptions, Order, WaveState};
use crate::geometry::{eikonal_arrival, lattice_geodesic, DistanceField, MetricField, SpeedField};
use crate::velocity::{majorant, VelocityField};

use super::scenario::Scenario;
use super::{numerical, write_file, CliError, DISTANCE_CSV, EVOLUTION_CSV, SNAPSHOT_CSV, SUMMARY_TXT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Metric distance of `M̂^{-1}`.
    Geodesic,
    /// First-arrival time at speed `√⟨n, M n⟩`.
    Arrival,
}

fn source_point(s: &Scenario) -> Result<Vec<f64>, CliError> {
    let dom = s.build_domain()?;
    let p = s.analysis.probe.clone().unwrap_or_else(|| dom.center());
    if !dom.contains(&p) {
        return Err(CliError::Scenario(format!("distance source {p:?} is outside the domain; set analysis.probe")));
    }
    Ok(p)
}

/// Distance field from `analysis.probe` (or the domain centre).
pub fn distance(s: &Scenario, mode: DistanceMode) -> Result<DistanceField, CliError> {
    let sys = s.build_system()?;
    let grid = s.build_grid()?;
    let src = grid.nearest(&source_point(s)?);
    let sampled = VelocityField::sample(&sys, &grid).map_err(numerical)?;
    let stencil = s.stencil()?;
    match mode {
        DistanceMode::Geodesic => {
            let field = majorant(&sampled, s.analysis.delta).map_err(numerical)?;
            let metric = MetricField::from_majorant(&field).map_err(numerical)?;
            lattice_geodesic(&metric, &[src], stencil).map_err(numerical)
        }
        DistanceMode::Arrival => {
            let speed = SpeedField::Velocity(sampled.samples.clone());
            let mut f = eikonal_arrival(&grid, &speed, &[src], stencil).map_err(numerical)?;
            for (i, ins) in sampled.inside.iter().enumerate() {
                if !ins {
                    f.values[i] = f64::INFINITY;
                }
            }
            Ok(f)
        }
    }
}

/// Run `distance` and write `distance.csv` and `summary.txt`.
pub fn cmd_distance(s: &Scenario, mode: DistanceMode) -> Result<DistanceField, CliError> {
    let f = distance(s, mode)?;
    write_file(&s.output.dir, DISTANCE_CSV, |w| f.write_csv(w))?;
    let finite: Vec<f64> = f.values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut o = String::new();
    let _ = writeln!(o, "mode: {}", if mode == DistanceMode::Geodesic { "geodesic" } else { "arrival" });
    let _ = writeln!(o, "source: {}", f.source_descriptor);
    let _ = writeln!(o, "reachable nodes: {} of {}", finite.len(), f.values.len());
    let _ = writeln!(o, "max finite value: {:.6e}", finite.iter().copied().fold(0.0, f64::max));
    let _ = writeln!(o, "stencil overestimate bound: {:.6}", f.stencil_bound);
    for w in &f.warnings {
        let _ = writeln!(o, "warning: {w}");
    }
    write_file(&s.output.dir, SUMMARY_TXT, |w| w.write_all(o.as_bytes()))?;
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub result: EvolutionResult,
    pub energy_drift: f64,
    pub summary: String,
}

/// Evolve the scenario's Gaussian pulse to `simulate.T`.
pub fn simulate(s: &Scenario) -> Result<SimulationReport, CliError> {
    let sim = s.simulate.as_ref().ok_or_else(|| CliError::Scenario("the scenario has no `simulate` section".into()))?;
    let sys = s.build_system()?;
    let grid = s.build_grid()?;
    let order = if sim.order == 4 { Order::Fourth } else { Order::Second };
    let op = DiscreteOperator::new(&sys, &grid, order).map_err(numerical)?;
    if sim.pulse.components.len() != sys.k() {
        return Err(CliError::Scenario(format!(
            "pulse has {} components, the system has {}",
            sim.pulse.components.len(),
            sys.k()
        )));
    }
    let comps: Vec<Complex64> = sim.pulse.components.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let state0 = WaveState::gaussian(&op, &sim.pulse.center, sim.pulse.sigma, &comps).map_err(numerical)?;
    let opts = EvolveOptions { t_final: sim.t_final, cfl: sim.cfl, ..Default::default() };
    let result = integrate(&sys, &op, &state0, &opts).map_err(numerical)?;
    let drift = result.log.relative_energy_drift();

    let mut o = String::new();
    let _ = writeln!(o, "system: {} on {:?} nodes, order {}", sys.label(), s.grid.nodes, sim.order);
    let _ = writeln!(o, "steps: {} with dt = {:.6e} to T = {}", result.log.steps, result.log.dt, sim.t_final);
    let _ = writeln!(o, "relative energy drift: {drift:.3e}");
    if let Some(env) = &result.log.envelope {
        let _ = writeln!(o, "support envelope: lo {:?}, hi {:?}", env.lo, env.hi);
    }
    let margin = result.log.entries.iter().map(|e| e.boundary_margin).fold(f64::INFINITY, f64::min);
    let _ = writeln!(o, "smallest distance from support to grid edge: {margin:.6e}");
    if result.log.boundary_contaminated {
        let _ = writeln!(o, "warning: the support came within four cells of the grid edge");
    }
    for w in &result.log.warnings {
        let _ = writeln!(o, "warning: {w}");
    }
    Ok(SimulationReport { result, energy_drift: drift, summary: o })
}

/// Run `simulate` and write `evolution.csv`, `snapshot.csv` and `summary.txt`.
pub fn cmd_simulate(s: &Scenario) -> Result<SimulationReport, CliError> {
    let r = simulate(s)?;
    let d = s.grid.nodes.len();
    write_file(&s.output.dir, EVOLUTION_CSV, |w| r.result.log.write_csv(w, d))?;
    write_file(&s.output.dir, SNAPSHOT_CSV, |w| r.result.state.write_csv(w))?;
    write_file(&s.output.dir, SUMMARY_TXT, |w| w.write_all(r.summary.as_bytes()))?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(extra: &str) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{"system": {{"name": "telegraph", "params": {{"L": "1", "C": "1"}}}},
                "domain": {{"lower": [0], "upper": [1]}}, "grid": {{"nodes": [256]}},
                {extra} "output": {{"dir": "unused"}}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn arrival_matches_constant_speed() {
        let s = line(r#""analysis": {"probe": [0.5]},"#);
        let f = distance(&s, DistanceMode::Arrival).unwrap();
        let grid = s.build_grid().unwrap();
        let src = grid.coord(grid.nearest(&[0.5]))[0];
        let i = grid.nearest(&[0.9]);
        let exact = (grid.coord(i)[0] - src).abs() / 2f64.sqrt();
        assert!((f.values[i] - exact).abs() < 1e-9, "{} vs {exact}", f.values[i]);
    }

    #[test]
    fn geodesic_is_scaled_by_slack() {
        let s = line(r#""analysis": {"probe": [0.5], "delta": 0.1},"#);
        let f = distance(&s, DistanceMode::Geodesic).unwrap();
        let grid = s.build_grid().unwrap();
        let i = grid.nearest(&[0.9]);
        let dx = (grid.coord(i)[0] - grid.coord(grid.nearest(&[0.5]))[0]).abs();
        let exact = dx / (2.0f64 * 1.1 + 1e-12 * 2.0).sqrt();
        assert!((f.values[i] - exact).abs() / exact < 1e-6, "{} vs {exact}", f.values[i]);
    }

    #[test]
    fn simulation_conserves_energy() {
        let s = line(r#""simulate": {"T": 0.2, "cfl": 0.4, "pulse": {"center": [0.5], "sigma": 0.02, "components": [1, 0]}},"#);
        let r = simulate(&s).unwrap();
        assert!(r.energy_drift < 1e-6, "{}", r.energy_drift);
        assert!(!r.result.log.boundary_contaminated);
    }
}
