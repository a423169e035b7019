//! Executes a validated problem and collects its outputs as JSON.

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::config::{ExperimentSpec, Problem, RefineSpec};
use crate::critical::{
    self, lojasiewicz_fit_with, morse_index_check, negative_slice, refine_critical, unstable_boundedness_check,
    weight_decomposition, BoundednessReport, CriticalRecord, IndexStatus, LojasiewiczFit, MorseIndexReport,
    SliceFiber, TailSelection, WeightDecomposition,
};
use crate::flow::{
    energy_identity_defect, trace_distance, Direction, FlowTrace, GradientFlow, ProbeOutcome,
    TraceStatus,
};
use crate::moment;
use crate::quiver::{GroupElement, LieAlgebraElement, RepSpace, Representation};
use crate::retract::{
    census_grid, condition4_probe, retract_modulus, retract_suite, CensusGrid, CensusSet, LevelNeighbourhood,
    CENSUS_RHO_MAX,
};
use crate::sampling;
use crate::strata::{self, BrokenLineExperiment, StratumLabel, VALUE_TOL};
use crate::variety::{on_variety, project_to_variety, slice_variety_probe};

/// Tolerances of the invariant suite run by the `check` experiment.
pub mod tolerance {
    /// Relative error between the analytic and difference gradients.
    pub const GRADIENT: f64 = 1e-6;
    /// Energy identity defect, relative to `1 + f₀`.
    pub const ENERGY: f64 = 1e-6;
    /// Largest increase of `f` along a forward trace, relative to `1 + f₀`.
    pub const MONOTONE: f64 = 1e-9;
    /// Absolute drift of cycle traces and relation residuals.
    pub const CONSERVATION: f64 = 1e-8;
    /// Equivariance defects, relative to `1 + |value|`.
    pub const EQUIVARIANCE: f64 = 1e-8;
    /// `|f(φ(x, τ_ℓ(x))) − ℓ|`, relative to `1 + |ℓ|`.
    pub const TAU: f64 = 1e-8;
    /// Moment map equation defect, relative to `1 + ‖x‖²`.
    pub const MOMENT_EQUATION: f64 = 1e-6;
    /// Difference step for the gradient check.
    pub const GRADIENT_STEP: f64 = 1e-5;
}

/// What a run produced: its outputs, non-fatal warnings, a fatal error if one
/// stopped it, and any invariant violations found by `check`.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub outputs: Value,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub violations: Vec<String>,
}

pub fn flat(space: &RepSpace, x: &Representation) -> Value {
    json!(space.flatten(x))
}

pub fn trace_json(flow: &GradientFlow, trace: &FlowTrace) -> Value {
    let space = &flow.space;
    let samples: Vec<Value> = trace
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![s.t, s.f, s.gradnorm];
            row.extend_from_slice(&s.monitors);
            json!(row)
        })
        .collect();
    let drift: Vec<f64> = (0..trace.monitor_names.len()).map(|k| trace.monitor_drift(k)).collect();
    json!({
        "direction": match trace.direction { Direction::Forward => "forward", Direction::Backward => "backward" },
        "status": trace.status.as_str(),
        "duration": trace.duration(),
        "steps": trace.samples.len() - 1,
        "start": flat(space, &trace.first().x),
        "end": flat(space, &trace.last().x),
        "f_start": trace.first().f,
        "f_end": trace.last().f,
        "energy_defect": energy_identity_defect(flow, trace),
        "max_f_increase": trace.max_f_increase(),
        "monitor_names": trace.monitor_names,
        "monitor_drift": drift,
        "columns": trace_columns(&trace.monitor_names),
        "samples": samples,
    })
}

pub fn trace_columns(monitor_names: &[String]) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "f".into(), "gradnorm".into()];
    cols.extend(monitor_names.iter().cloned());
    cols
}

fn record_json(space: &RepSpace, rec: &CriticalRecord) -> Value {
    json!({
        "x": flat(space, &rec.x),
        "f_crit": rec.f_crit,
        "beta_spectra": rec.beta_spectra,
        "grad_residual": rec.grad_residual,
        "criticality_residual": rec.criticality_residual(space),
    })
}

fn weights_json(wd: &WeightDecomposition) -> Value {
    let edges: Vec<Value> = wd
        .edge_weights
        .iter()
        .map(|m| json!((0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>()))
        .collect();
    let partitions: Vec<Value> = wd
        .partitions()
        .iter()
        .map(|p| json!({"negative": p.negative, "zero": p.zero, "positive": p.positive}))
        .collect();
    json!({
        "vertex_eigenvalues": wd.vertex_eigenvalues,
        "edge_weights": edges,
        "partitions": partitions,
        "weight_tol": wd.weight_tol,
    })
}

fn fiber_json(fiber: &SliceFiber) -> Value {
    json!({"dim": fiber.dim, "basis": fiber.basis, "orthonormality_defect": fiber.orthonormality_defect()})
}

fn index_json(r: &MorseIndexReport) -> Value {
    json!({
        "slice_dim": r.slice_dim,
        "hessian_index": r.hessian_index,
        "agree": r.agree,
        "status": index_status(r.status),
        "hessian_eigenvalues": r.hessian_eigenvalues,
    })
}

fn index_status(s: IndexStatus) -> &'static str {
    match s {
        IndexStatus::Determinate => "determinate",
        IndexStatus::Indeterminate => "indeterminate",
        IndexStatus::Unreliable => "unreliable",
    }
}

fn fit_json(fit: &LojasiewiczFit) -> Value {
    json!({"theta": fit.theta, "c": fit.c, "c_lower": fit.c_lower, "r2": fit.r2, "samples": fit.samples})
}

fn boundedness_json(space: &RepSpace, r: &BoundednessReport) -> Value {
    let seeds: Vec<Value> = r
        .seeds
        .iter()
        .map(|s| {
            json!({
                "direction": s.direction,
                "endpoint": s.endpoint.as_ref().map(|x| flat(space, x)),
                "distance": s.distance,
                "arc_length": s.arc_length,
                "time": s.time,
                "error": s.error,
            })
        })
        .collect();
    json!({
        "seeds": seeds,
        "max_distance": r.max_distance,
        "max_arc_length": r.max_arc_length,
        "fit": r.fit.as_ref().map(fit_json),
        "bound": r.bound,
        "bounded": r.bounded,
    })
}

fn outcome_json(space: &RepSpace, o: &ProbeOutcome) -> Value {
    match o {
        ProbeOutcome::Exits { time, point } => json!({"outcome": "exits", "time": time, "point": flat(space, point)}),
        ProbeOutcome::ConvergesInterior { limit, f_limit } => {
            json!({"outcome": "converges_interior", "limit": flat(space, limit), "f_limit": f_limit})
        }
        ProbeOutcome::Inconclusive { status } => json!({"outcome": "inconclusive", "status": status.as_str()}),
    }
}

fn label_json(l: &StratumLabel) -> Value {
    json!({"spectra": l.spectra, "f_limit": l.f_limit})
}

fn grid_json(g: &CensusGrid) -> Value {
    let ids: Vec<i64> = g.component.iter().map(|c| c.map_or(-1, |v| v as i64)).collect();
    json!({"n_rho": g.n_rho, "n_theta": g.n_theta, "rho_max": g.rho_max, "component_id": ids})
}

fn check_status(trace: &FlowTrace, what: &str, warnings: &mut Vec<String>) {
    if matches!(trace.status, TraceStatus::StepLimit | TraceStatus::BlowUp) {
        warnings.push(format!("{what}: flow ended with {} at t = {}", trace.status.as_str(), trace.duration()));
    }
}

/// Refine the critical point near `x`, optionally after a full forward flow.
fn refine_point(flow: &GradientFlow, x: &Representation, spec: &RefineSpec) -> Result<(CriticalRecord, FlowTrace), String> {
    let trace = flow.integrate(x);
    let start = if spec.flow_first { trace.last().x.clone() } else { x.clone() };
    let rec = refine_critical(&flow.space, &flow.alpha, &start, &spec.options()).map_err(|e| e.to_string())?;
    Ok((rec, trace))
}

/// Run the configured experiment. Per-item failures are recorded in the
/// outputs; an experiment-level failure sets `error` and keeps what was built.
pub fn run(problem: &Problem) -> RunOutcome {
    let mut out = RunOutcome { outputs: Value::Object(Map::new()), ..Default::default() };
    match &problem.config.experiment {
        ExperimentSpec::Flow { direction, level, tau_levels, condition2 } => {
            run_flow(problem, (*direction).into(), *level, tau_levels, condition2.as_ref().map(|w| (w.a, w.b)), &mut out)
        }
        ExperimentSpec::Critical { refine, slice_tol, fit_tail } => {
            run_critical(problem, refine, *slice_tol, (*fit_tail).into(), &mut out)
        }
        ExperimentSpec::Slice { refine, slice_tol, eps, seeds, delta0 } => {
            run_slice(problem, refine, *slice_tol, *eps, *seeds, *delta0, &mut out)
        }
        ExperimentSpec::Strata { .. } => run_strata(problem, &mut out),
        ExperimentSpec::Lines { z } => run_lines(problem, *z, &mut out),
        ExperimentSpec::Broken { .. } => run_broken(problem, &mut out),
        ExperimentSpec::Retract { .. } => run_retract(problem, &mut out),
        ExperimentSpec::Variety { probe, refine, slice_tol } => {
            run_variety(problem, probe.as_ref(), refine, *slice_tol, &mut out)
        }
        ExperimentSpec::Check { max_time, critical } => run_check(problem, *max_time, critical, &mut out),
    }
    out
}

fn set(out: &mut RunOutcome, key: &str, v: Value) {
    out.outputs.as_object_mut().expect("outputs are an object").insert(key.into(), v);
}

fn run_flow(
    p: &Problem,
    dir: Direction,
    level: Option<f64>,
    tau_levels: &[f64],
    window: Option<(f64, f64)>,
    out: &mut RunOutcome,
) {
    let flow = p.flow();
    let space = &flow.space;
    let items: Vec<(FlowTrace, Vec<Value>, Option<Value>)> = p
        .points
        .par_iter()
        .map(|x| {
            let trace = match level {
                Some(l) => flow.integrate_to_level(x, dir, l),
                None => flow.integrate_dir(x, dir),
            };
            let taus = tau_levels
                .iter()
                .map(|&l| match flow.tau_level(x, l) {
                    Ok((t, y)) => json!({"level": l, "time": t, "point": flat(space, &y), "f": flow.f(&y)}),
                    Err(e) => json!({"level": l, "error": e.to_string()}),
                })
                .collect();
            let probe = window.map(|(a, b)| match flow.condition2_probe(x, a, b) {
                Ok(r) => json!({"a": a, "b": b, "forward": outcome_json(space, &r.forward),
                    "backward": outcome_json(space, &r.backward)}),
                Err(e) => json!({"a": a, "b": b, "error": e.to_string()}),
            });
            (trace, taus, probe)
        })
        .collect();
    let mut traces = Vec::new();
    let mut taus = Vec::new();
    let mut probes = Vec::new();
    for (i, (trace, tau, probe)) in items.into_iter().enumerate() {
        check_status(&trace, &format!("point {i}"), &mut out.warnings);
        traces.push(trace_json(flow, &trace));
        taus.push(Value::Array(tau));
        if let Some(pr) = probe {
            probes.push(pr);
        }
    }
    set(out, "traces", Value::Array(traces));
    if !tau_levels.is_empty() {
        set(out, "tau", Value::Array(taus));
    }
    if window.is_some() {
        set(out, "condition2", Value::Array(probes));
    }
}

struct CriticalItem {
    rec: CriticalRecord,
    wd: WeightDecomposition,
    fiber: SliceFiber,
    index: MorseIndexReport,
    trace: FlowTrace,
}

fn analyse(flow: &GradientFlow, x: &Representation, refine: &RefineSpec, slice_tol: f64) -> Result<CriticalItem, String> {
    let (rec, trace) = refine_point(flow, x, refine)?;
    let wd = weight_decomposition(&flow.space, &rec);
    let fiber = negative_slice(&flow.space, &rec, &wd, slice_tol);
    let index = morse_index_check(&flow.space, &rec, &fiber, &flow.alpha);
    Ok(CriticalItem { rec, wd, fiber, index, trace })
}

fn index_warning(i: usize, index: &MorseIndexReport, warnings: &mut Vec<String>) {
    if index.status != IndexStatus::Determinate {
        warnings.push(format!("point {i}: Morse index comparison is {}", index_status(index.status)));
    } else if !index.agree {
        warnings.push(format!(
            "point {i}: slice dimension {} differs from Hessian index {}",
            index.slice_dim, index.hessian_index
        ));
    }
}

fn run_critical(p: &Problem, refine: &RefineSpec, slice_tol: f64, tail: TailSelection, out: &mut RunOutcome) {
    let flow = p.flow();
    let space = &flow.space;
    let items: Vec<Result<CriticalItem, String>> =
        p.points.par_iter().map(|x| analyse(flow, x, refine, slice_tol)).collect();
    let mut records = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        match item {
            Ok(it) => {
                index_warning(i, &it.index, &mut out.warnings);
                let approaches = it.trace.status == TraceStatus::Converged
                    && (it.trace.last().f - it.rec.f_crit).abs() < VALUE_TOL
                    && it.trace.last().x.distance(&it.rec.x) < 1e-4;
                let fit = if approaches {
                    match lojasiewicz_fit_with(&it.trace, it.rec.f_crit, tail) {
                        Ok(f) => fit_json(&f),
                        Err(e) => json!({"error": e.to_string()}),
                    }
                } else {
                    json!({"error": "the forward trace of this point does not converge to the refined critical point"})
                };
                records.push(json!({
                    "point": i,
                    "record": record_json(space, &it.rec),
                    "weights": weights_json(&it.wd),
                    "slice": fiber_json(&it.fiber),
                    "index": index_json(&it.index),
                    "lojasiewicz": fit,
                }));
            }
            Err(e) => {
                out.warnings.push(format!("point {i}: {e}"));
                records.push(json!({"point": i, "error": e}));
            }
        }
    }
    set(out, "critical", Value::Array(records));
}

fn run_slice(
    p: &Problem,
    refine: &RefineSpec,
    slice_tol: f64,
    eps: f64,
    seeds: usize,
    delta0: f64,
    out: &mut RunOutcome,
) {
    let flow = p.flow();
    let space = &flow.space;
    let mut records = Vec::new();
    for (i, x) in p.points.iter().enumerate() {
        match analyse(flow, x, refine, slice_tol) {
            Ok(it) => {
                index_warning(i, &it.index, &mut out.warnings);
                let b = unstable_boundedness_check(flow, &it.rec, &it.fiber, eps, seeds, delta0);
                if it.fiber.dim > 0 && !b.bounded {
                    out.warnings.push(format!("point {i}: unstable boundedness check failed"));
                }
                records.push(json!({
                    "point": i,
                    "record": record_json(space, &it.rec),
                    "slice": fiber_json(&it.fiber),
                    "negative_weight_fraction": it.fiber.basis.iter()
                        .map(|v| critical::negative_weight_fraction(space, &it.wd, v)).collect::<Vec<_>>(),
                    "orbit_overlap": critical::orbit_overlap(space, &it.rec, &it.fiber),
                    "index": index_json(&it.index),
                    "boundedness": boundedness_json(space, &b),
                }));
            }
            Err(e) => {
                out.warnings.push(format!("point {i}: {e}"));
                records.push(json!({"point": i, "error": e}));
            }
        }
    }
    set(out, "slices", Value::Array(records));
}

fn run_strata(p: &Problem, out: &mut RunOutcome) {
    let flow = p.flow();
    let space = &flow.space;
    let labels: Vec<Result<StratumLabel, String>> =
        p.points.par_iter().map(|x| strata::stratum_label(flow, x).map_err(|e| e.to_string())).collect();
    let mut groups: Vec<(StratumLabel, Vec<usize>)> = Vec::new();
    let mut rows = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Ok(l) => {
                let g = match groups.iter().position(|(g, _)| g.same_stratum(l)) {
                    Some(g) => g,
                    None => {
                        groups.push((l.clone(), Vec::new()));
                        groups.len() - 1
                    }
                };
                groups[g].1.push(i);
                rows.push(json!({"point": i, "label": label_json(l), "stratum": g}));
            }
            Err(e) => {
                out.warnings.push(format!("point {i}: {e}"));
                rows.push(json!({"point": i, "error": e}));
            }
        }
    }
    set(out, "labels", Value::Array(rows));
    set(
        out,
        "strata",
        Value::Array(groups.iter().map(|(l, m)| json!({"label": label_json(l), "members": m})).collect()),
    );
    if let ExperimentSpec::Strata { unstable: Some(u) } = &p.config.experiment {
        let x = p.point("experiment.unstable.critical", &u.critical).expect("validated");
        match refine_critical(space, &flow.alpha, &x, &Default::default()) {
            Ok(rec) => {
                let fiber = strata::fiber_of(flow, &rec);
                let samples = strata::sample_unstable_level(flow, &rec, &fiber, u.eps, u.n, u.delta0);
                let rows: Vec<Value> = samples
                    .par_iter()
                    .map(|s| {
                        json!({
                            "direction": s.direction,
                            "endpoint": s.endpoint.as_ref().map(|e| flat(space, e)),
                            "f": s.endpoint.as_ref().map(|e| flow.f(e)),
                            "time": s.time,
                            "membership_distance": strata::unstable_membership(flow, &rec, s, u.margin),
                            "error": s.error,
                        })
                    })
                    .collect();
                set(out, "unstable", json!({"record": record_json(space, &rec), "slice_dim": fiber.dim, "samples": rows}));
            }
            Err(e) => {
                out.error = Some(format!("refining experiment.unstable.critical: {e}"));
            }
        }
    }
}

fn run_lines(p: &Problem, z: f64, out: &mut RunOutcome) {
    let flow = p.flow();
    let space = &flow.space;
    let lines: Vec<Value> = p
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| match strata::flow_line(flow, x, z) {
            Ok(l) => json!({
                "point": i,
                "z": l.z,
                "anchor": flat(space, &l.anchor),
                "upper": l.upper.as_ref().map(|r| record_json(space, r)),
                "lower": l.lower.as_ref().map(|r| record_json(space, r)),
                "missing": l.missing,
                "forward": trace_json(flow, &l.forward),
                "backward": trace_json(flow, &l.backward),
            }),
            Err(e) => json!({"point": i, "error": e.to_string()}),
        })
        .collect();
    for l in &lines {
        if let Some(e) = l.get("error").and_then(Value::as_str) {
            out.warnings.push(format!("point {}: {e}", l["point"]));
        } else if let Some(m) = l.get("missing").and_then(Value::as_str) {
            out.warnings.push(format!("point {}: {m}", l["point"]));
        }
    }
    set(out, "lines", Value::Array(lines));
}

fn run_broken(p: &Problem, out: &mut RunOutcome) {
    let ExperimentSpec::Broken { base, direction, params, levels, dwell_tol, match_tol, limits } = &p.config.experiment
    else {
        unreachable!()
    };
    let flow = p.flow();
    let space = &flow.space;
    let exp = BrokenLineExperiment {
        base: p.point("experiment.base", base).expect("validated"),
        direction: p.point("experiment.direction", direction).expect("validated"),
        params: params.clone(),
        levels: levels.clone(),
        dwell_tol: *dwell_tol,
        match_tol: *match_tol,
    };
    match exp.run(flow) {
        Ok(r) => {
            let checkpoints: Vec<Value> =
                r.checkpoints.iter().map(|row| Value::Array(row.iter().map(|x| flat(space, x)).collect())).collect();
            let connecting: Vec<Value> = r
                .connecting
                .iter()
                .map(|c| {
                    json!({"level": c.level, "segment": [c.segment.0, c.segment.1],
                        "backward_min_distance": c.backward_min_distance,
                        "forward_min_distance": c.forward_min_distance, "ok": c.ok})
                })
                .collect();
            let mut report = json!({
                "chain": r.chain.iter().map(|c| record_json(space, c)).collect::<Vec<_>>(),
                "chain_values": r.chain_values(),
                "chain_strictly_decreasing": r.chain_strictly_decreasing(),
                "params": r.params,
                "levels": r.levels,
                "checkpoints": checkpoints,
                "cauchy": r.cauchy,
                "to_final": r.to_final,
                "connecting": connecting,
                "forward_limit_values": r.forward_limit_values,
                "semicontinuity_ok": r.semicontinuity_ok,
                "broken": r.broken,
                "note": r.note,
            });
            if !limits.is_empty() {
                let pts: Vec<Representation> = limits
                    .iter()
                    .enumerate()
                    .map(|(i, l)| p.point(&format!("experiment.limits[{i}]"), l).expect("validated"))
                    .collect();
                report["to_limits"] = json!(r.distances_to(&pts));
            }
            set(out, "broken", report);
        }
        Err(e) => out.error = Some(format!("broken-line experiment: {e}")),
    }
}

fn run_retract(p: &Problem, out: &mut RunOutcome) {
    let ExperimentSpec::Retract { grid, censuses, condition4, suite, .. } = &p.config.experiment else {
        unreachable!()
    };
    let scene = p.scene().expect("retract scene");
    if let Err(e) = scene.validate() {
        out.error = Some(e.to_string());
        return;
    }
    let rows: Vec<Value> = censuses
        .par_iter()
        .map(|c| {
            let set = CensusSet { sublevel: c.sublevel, include_unstable: c.include_unstable };
            let g = census_grid(&scene, set, *grid, CENSUS_RHO_MAX);
            let refined = census_grid(&scene, set, 2 * grid, CENSUS_RHO_MAX).components;
            json!({
                "sublevel": c.sublevel,
                "include_unstable": c.include_unstable,
                "components": g.components,
                "refined_components": refined,
                "stable": g.components == refined,
                "grid": grid_json(&g),
            })
        })
        .collect();
    for (i, r) in rows.iter().enumerate() {
        if r["stable"] != Value::Bool(true) {
            out.warnings.push(format!("census {i}: component count changed under refinement"));
        }
    }
    set(out, "scene", json!({"kind": scene.kind.as_str(), "eps": scene.eps, "delta": scene.delta, "c": 0.0}));
    set(out, "censuses", Value::Array(rows));
    if let Some(c4) = condition4 {
        let u = c4.window.map_or(LevelNeighbourhood::EntireLevelSet, LevelNeighbourhood::Window);
        let r = condition4_probe(&scene, u, c4.radius, c4.samples, c4.halvings);
        set(
            out,
            "condition4",
            json!({
                "holds": r.holds,
                "radii": r.radii,
                "violations": r.violations,
                "witness": r.witness.map(|w| json!({"radius": w.radius,
                    "start": [w.start.0, w.start.1], "landing": [w.landing.0, w.landing.1]})),
            }),
        );
    }
    if let Some(s) = suite {
        match retract_suite(&scene, s.pairs, p.config.seed) {
            Ok(r) => {
                let mut v = json!({
                    "pairs": r.pairs,
                    "trichotomy_failures": r.trichotomy_failures,
                    "identity_defect": r.identity_defect,
                    "final_level_defect": r.final_level_defect,
                    "landing_defect": r.landing_defect,
                    "errors": r.errors,
                });
                if let Some(m) = &s.modulus {
                    v["modulus"] = match retract_modulus(&scene, m.n, &m.s_values) {
                        Ok(w) => json!(w),
                        Err(e) => json!({"error": e.to_string()}),
                    };
                }
                set(out, "suite", v);
            }
            Err(e) => out.error = Some(format!("retract suite: {e}")),
        }
    }
}

fn run_variety(
    p: &Problem,
    probe: Option<&super::config::ProbeSpec>,
    refine: &RefineSpec,
    slice_tol: f64,
    out: &mut RunOutcome,
) {
    let flow = p.flow();
    let space = &flow.space;
    let spec = &p.variety;
    let rows: Vec<Value> = p
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let proj = match project_to_variety(space, x, spec) {
                Ok(pr) => json!({"point": flat(space, &pr.point), "distance": pr.distance,
                    "residual": pr.residual, "iterations": pr.iterations}),
                Err(e) => json!({"error": e.to_string()}),
            };
            json!({"point": i, "on_variety": on_variety(space, x, spec),
                "residuals": spec.residuals(space, x), "projection": proj})
        })
        .collect();
    set(out, "membership", Value::Array(rows));
    if let Some(pr) = probe {
        let x = p.point("experiment.probe.critical", &pr.critical).expect("validated");
        let rec = match refine_critical(space, &flow.alpha, &x, &refine.options()) {
            Ok(r) => r,
            Err(e) => {
                out.error = Some(format!("refining experiment.probe.critical: {e}"));
                return;
            }
        };
        let wd = weight_decomposition(space, &rec);
        let fiber = negative_slice(space, &rec, &wd, slice_tol);
        match slice_variety_probe(flow, &rec, &fiber, spec, pr.eps, pr.n, pr.delta0) {
            Ok(r) => {
                if !r.agree {
                    out.warnings.push(format!(
                        "linearized dimension {} differs from sampled dimension {}",
                        r.linear_dim, r.sampled_dim
                    ));
                }
                if !r.residuals_ok {
                    out.warnings.push("relation residual exceeded 10 × residual_tol along a trace".into());
                }
                let seeds: Vec<Value> = r
                    .seeds
                    .iter()
                    .map(|s| {
                        json!({"direction": s.direction, "projection_distance": s.projection_distance,
                        "max_residual": s.max_residual, "tightened": s.tightened,
                        "endpoint": s.endpoint.as_ref().map(|e| flat(space, e)), "error": s.error})
                    })
                    .collect();
                set(
                    out,
                    "probe",
                    json!({"record": record_json(space, &rec), "fiber_dim": r.fiber_dim, "linear_dim": r.linear_dim,
                    "sampled_dim": r.sampled_dim, "agree": r.agree, "residuals_ok": r.residuals_ok, "seeds": seeds}),
                );
            }
            Err(e) => out.error = Some(format!("slice variety probe: {e}")),
        }
    }
}

/// Worst value of one invariant over the suite.
struct Invariant {
    name: &'static str,
    tol: f64,
    worst: f64,
    count: usize,
    failures: Vec<String>,
}

impl Invariant {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, count: 0, failures: Vec::new() }
    }

    /// Record a defect already normalized so that the tolerance applies.
    fn observe(&mut self, what: &str, value: f64) {
        self.count += 1;
        if value.is_nan() || value > self.worst {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
        if !(value <= self.tol) {
            self.failures.push(format!("{}: {what} gives {value:e} > {:e}", self.name, self.tol));
        }
    }

    fn json(&self) -> Value {
        json!({"name": self.name, "tol": self.tol, "worst": self.worst, "count": self.count,
            "pass": self.failures.is_empty()})
    }
}

struct PointChecks {
    gradient: f64,
    energy: f64,
    monotone: f64,
    /// `(monitor index, drift)` for every conserved monitor.
    conservation: Vec<(usize, f64)>,
    moment_eq: f64,
    mu_equivariance: f64,
    f_equivariance: f64,
    trace_equivariance: f64,
    label_equivariance: Option<bool>,
    tau: Option<f64>,
    index: Option<MorseIndexReport>,
    notes: Vec<String>,
}

fn check_point(
    flow: &GradientFlow,
    short: &GradientFlow,
    residual_tol: f64,
    x: &Representation,
    seed: u64,
    i: usize,
) -> PointChecks {
    let space = &flow.space;
    let alpha = &flow.alpha;
    let mut rng = sampling::stream_rng(seed, 1_000_000 + i as u64);
    let mut notes = Vec::new();

    let g = space.flatten(&moment::flow_velocity(space, x, alpha).scale(-2.0));
    let fd = moment::fd_gradient(space, x, alpha, tolerance::GRADIENT_STEP);
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let gradient = crate::linalg::norm(&diff) / crate::linalg::norm(&g).max(1e-12);

    let trace = short.integrate(x);
    let f0 = trace.first().f;
    let energy = energy_identity_defect(short, &trace) / (1.0 + f0);
    let monotone = trace.max_f_increase() / (1.0 + f0);
    // cycle traces are conserved everywhere, relation residuals only on their zero set
    let cycles = 2 * flow.monitors.cycles.len();
    let start = &trace.first().monitors;
    let conservation = (0..trace.monitor_names.len())
        .filter(|&k| k < cycles || start[k] < residual_tol)
        .map(|k| (k, trace.monitor_drift(k)))
        .collect();

    let tangent = space.random(&mut rng, 1.0);
    let u = LieAlgebraElement::random(space.dims(), &mut rng, 1.0);
    let moment_eq = moment::moment_map_equation_check(space, x, &tangent, &u, 1e-5) / (1.0 + x.norm_sqr());

    let k = GroupElement::random_unitary(space.dims(), &mut rng);
    let kx = space.act(&k, x).expect("unitary blocks are invertible");
    let mu = moment::moment(space, x);
    let mu_k = moment::moment(space, &kx);
    let mu_equivariance = mu_k.sub(&mu.conjugate(&k)).norm() / (1.0 + mu.norm());
    let f_equivariance = (flow.f(&kx) - flow.f(x)).abs() / (1.0 + flow.f(x).abs());
    let trace_k = short.integrate(&kx);
    let trace_equivariance =
        trace_distance(&trace, &trace_k, |y| space.act(&k, y).expect("unitary")) / (1.0 + x.norm());

    let full = flow.integrate(x);
    let label_equivariance = match (strata::stratum_label(flow, x), strata::stratum_label(flow, &kx)) {
        (Ok(a), Ok(b)) => Some(a.same_stratum(&b)),
        _ => {
            notes.push(format!("point {i}: stratum label inconclusive"));
            None
        }
    };

    let tau = if full.status == TraceStatus::Converged && f0 - full.last().f > 1e-6 {
        let f_inf = full.last().f;
        let ell = f_inf + (0.05 + 0.9 * rand::Rng::random::<f64>(&mut rng)) * (f0 - f_inf);
        match flow.tau_level(x, ell) {
            Ok((_, y)) => Some((flow.f(&y) - ell).abs() / (1.0 + ell.abs())),
            Err(e) => {
                notes.push(format!("point {i}: tau_level failed: {e}"));
                Some(f64::INFINITY)
            }
        }
    } else {
        None
    };

    let index = if full.status == TraceStatus::Converged {
        match refine_critical(space, alpha, &full.last().x, &Default::default()) {
            Ok(rec) => {
                let fiber = strata::fiber_of(flow, &rec);
                Some(morse_index_check(space, &rec, &fiber, alpha))
            }
            Err(e) => {
                notes.push(format!("point {i}: refinement of the forward limit failed: {e}"));
                None
            }
        }
    } else {
        notes.push(format!("point {i}: forward flow ended with {}", full.status.as_str()));
        None
    };

    PointChecks {
        gradient,
        energy,
        monotone,
        conservation,
        moment_eq,
        mu_equivariance,
        f_equivariance,
        trace_equivariance,
        label_equivariance,
        tau,
        index,
        notes,
    }
}

fn run_check(p: &Problem, max_time: f64, critical: &[Vec<f64>], out: &mut RunOutcome) {
    let flow = p.flow();
    let space = &flow.space;
    let mut short = flow.clone();
    short.cfg.max_time = short.cfg.max_time.min(max_time);
    let seed = p.config.seed;
    let tol = p.variety.residual_tol;
    let results: Vec<PointChecks> =
        p.points.par_iter().enumerate().map(|(i, x)| check_point(flow, &short, tol, x, seed, i)).collect();

    let mut gradient = Invariant::new("gradient_consistency", tolerance::GRADIENT);
    let mut energy = Invariant::new("energy_identity", tolerance::ENERGY);
    let mut monotone = Invariant::new("monotone_descent", tolerance::MONOTONE);
    let mut conservation = Invariant::new("conservation", tolerance::CONSERVATION);
    let mut moment_eq = Invariant::new("moment_map_equation", tolerance::MOMENT_EQUATION);
    let mut equivariance = Invariant::new("equivariance", tolerance::EQUIVARIANCE);
    let mut labels = Invariant::new("label_equivariance", 0.0);
    let mut tau = Invariant::new("tau_level_contract", tolerance::TAU);
    let mut index = Invariant::new("index_equals_slice_dim", 0.0);
    let names = flow.monitors.names();
    for (i, r) in results.iter().enumerate() {
        let at = format!("point {i}");
        gradient.observe(&at, r.gradient);
        energy.observe(&at, r.energy);
        monotone.observe(&at, r.monotone);
        for &(k, d) in &r.conservation {
            conservation.observe(&format!("{at} monitor {}", names[k]), d);
        }
        moment_eq.observe(&at, r.moment_eq);
        equivariance.observe(&format!("{at} moment map"), r.mu_equivariance);
        equivariance.observe(&format!("{at} f"), r.f_equivariance);
        equivariance.observe(&format!("{at} trace"), r.trace_equivariance);
        if let Some(b) = r.label_equivariance {
            labels.observe(&at, if b { 0.0 } else { 1.0 });
        }
        if let Some(t) = r.tau {
            tau.observe(&at, t);
        }
        if let Some(ix) = &r.index {
            if ix.status == IndexStatus::Determinate {
                index.observe(&format!("{at} forward limit"), if ix.agree { 0.0 } else { 1.0 });
            } else {
                out.warnings.push(format!("{at}: index comparison at the forward limit is {}", index_status(ix.status)));
            }
        }
        out.warnings.extend(r.notes.iter().cloned());
    }
    let mut crit_rows = Vec::new();
    for (j, c) in critical.iter().enumerate() {
        let field = format!("experiment.critical[{j}]");
        let x = p.point(&field, c).expect("validated");
        match refine_critical(space, &flow.alpha, &x, &Default::default()) {
            Ok(rec) => {
                let fiber = strata::fiber_of(flow, &rec);
                let ix = morse_index_check(space, &rec, &fiber, &flow.alpha);
                index.observe(&field, if ix.agree && ix.status == IndexStatus::Determinate { 0.0 } else { 1.0 });
                crit_rows.push(json!({"record": record_json(space, &rec), "index": index_json(&ix)}));
            }
            Err(e) => {
                index.observe(&field, f64::INFINITY);
                crit_rows.push(json!({"error": e.to_string()}));
            }
        }
    }
    let all = [gradient, energy, monotone, conservation, moment_eq, equivariance, labels, tau, index];
    for inv in &all {
        out.violations.extend(inv.failures.iter().cloned());
    }
    set(out, "points", json!(p.points.len()));
    set(out, "invariants", Value::Array(all.iter().map(Invariant::json).collect()));
    set(out, "critical", Value::Array(crit_rows));
    set(out, "pass", json!(out.violations.is_empty()));
}
