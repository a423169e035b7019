//! Versioned JSON experiment configuration and its validation into a
//! ready-to-run problem.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{RefineOptions, TailSelection, CRITICAL_TOL, SEED_RADIUS};
use crate::flow::{Direction, GradientFlow, IntegratorConfig, Monitors};
use crate::linalg::C64;
use crate::moment::CentralShift;
use crate::quiver::{CycleWord, DimensionVector, Edge, Quiver, Relation, RepSpace, Representation};
use crate::retract::{RetractScene, SceneKind};
use crate::sampling;
use crate::variety::{SubvarietySpec, RESIDUAL_TOL};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, located by field path and, for syntax errors, by
/// line and column.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{field}: {message}", location.map(|(l, c)| format!("line {l}, column {c}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub location: Option<(usize, usize)>,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into(), location: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiver: Option<QuiverSpec>,
    #[serde(default)]
    pub dims: Vec<i64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub relations: Vec<RelationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub cycles: Vec<CycleSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    pub seed: u64,
    #[serde(default)]
    pub points: PointsSpec,
    pub experiment: ExperimentSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuiverSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub name: String,
    pub tail: String,
    pub head: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    /// `[re, im]`.
    pub coeff: [f64; 2],
    /// Edge names in traversal order.
    pub path: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CycleSpec {
    pub name: String,
    pub path: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blow_up_factor: Option<f64>,
}

impl IntegratorSpec {
    pub fn resolve(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_step: self.max_step.unwrap_or(d.max_step),
            min_step: self.min_step.unwrap_or(d.min_step),
            max_time: self.max_time.unwrap_or(d.max_time),
            grad_stop: self.grad_stop.unwrap_or(d.grad_stop),
            stall_window: self.stall_window.unwrap_or(d.stall_window),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            blow_up_factor: self.blow_up_factor.unwrap_or(d.blow_up_factor),
        }
    }
}

/// Initial points: the explicit list, then `random.count` draws.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointsSpec {
    /// Flattened representations (edge-major, column-major, `(re, im)`).
    #[serde(default)]
    pub explicit: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomPoints>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RandomPoints {
    pub count: usize,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSpec {
    #[default]
    Forward,
    Backward,
}

impl From<DirectionSpec> for Direction {
    fn from(d: DirectionSpec) -> Self {
        match d {
            DirectionSpec::Forward => Direction::Forward,
            DirectionSpec::Backward => Direction::Backward,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RefineSpec {
    #[serde(default = "default_refine_tol")]
    pub tol: f64,
    #[serde(default = "default_refine_iter")]
    pub max_iter: usize,
    #[serde(default = "default_refine_flow_time")]
    pub flow_time: f64,
    /// Flow each point to its forward limit before refining.
    #[serde(default)]
    pub flow_first: bool,
}

fn default_refine_tol() -> f64 {
    CRITICAL_TOL
}
fn default_refine_iter() -> usize {
    RefineOptions::default().max_iter
}
fn default_refine_flow_time() -> f64 {
    RefineOptions::default().flow_time
}

impl Default for RefineSpec {
    fn default() -> Self {
        Self {
            tol: default_refine_tol(),
            max_iter: default_refine_iter(),
            flow_time: default_refine_flow_time(),
            flow_first: false,
        }
    }
}

impl RefineSpec {
    pub fn options(&self) -> RefineOptions {
        RefineOptions { tol: self.tol, max_iter: self.max_iter, flow_time: self.flow_time }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TailSpec {
    All,
    RelativeGap(f64),
}

impl Default for TailSpec {
    fn default() -> Self {
        TailSpec::RelativeGap(1e-3)
    }
}

impl From<TailSpec> for TailSelection {
    fn from(t: TailSpec) -> Self {
        match t {
            TailSpec::All => TailSelection::All,
            TailSpec::RelativeGap(r) => TailSelection::RelativeGap(r),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LevelWindow {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UnstableSpec {
    /// Flattened approximate critical point, refined before sampling.
    pub critical: Vec<f64>,
    pub eps: f64,
    pub n: usize,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// Extra backward time in the membership check.
    #[serde(default = "one")]
    pub margin: f64,
}

fn default_delta0() -> f64 {
    SEED_RADIUS
}
fn default_slice_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CensusSpec {
    pub sublevel: f64,
    #[serde(default)]
    pub include_unstable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Condition4Spec {
    /// Half-width of the level-set neighbourhood; absent means the whole level set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    pub radius: f64,
    pub samples: usize,
    #[serde(default)]
    pub halvings: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RetractSuiteSpec {
    /// Number of sampled `(p, s)` pairs.
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ModulusSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModulusSpec {
    pub n: usize,
    pub s_values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SceneSpec {
    SmoothSaddle,
    SlitQuotient,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Flattened approximate critical point on the subvariety.
    pub critical: Vec<f64>,
    pub eps: f64,
    pub n: usize,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Flow {
        #[serde(default)]
        direction: DirectionSpec,
        /// Stop at this level instead of running to a limit.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<f64>,
        /// Levels for the `τ_ℓ` map applied to every point.
        #[serde(default)]
        tau_levels: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition2: Option<LevelWindow>,
    },
    Critical {
        #[serde(default)]
        refine: RefineSpec,
        #[serde(default = "default_slice_tol")]
        slice_tol: f64,
        #[serde(default)]
        fit_tail: TailSpec,
    },
    Slice {
        #[serde(default)]
        refine: RefineSpec,
        #[serde(default = "default_slice_tol")]
        slice_tol: f64,
        eps: f64,
        seeds: usize,
        #[serde(default = "default_delta0")]
        delta0: f64,
    },
    Strata {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unstable: Option<UnstableSpec>,
    },
    Lines {
        z: f64,
    },
    Broken {
        base: Vec<f64>,
        direction: Vec<f64>,
        params: Vec<f64>,
        levels: Vec<f64>,
        dwell_tol: f64,
        match_tol: f64,
        /// Optional reference limits, one flattened point per level.
        #[serde(default)]
        limits: Vec<Vec<f64>>,
    },
    Retract {
        scene: SceneSpec,
        eps: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        grid: usize,
        #[serde(default)]
        censuses: Vec<CensusSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition4: Option<Condition4Spec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        suite: Option<RetractSuiteSpec>,
    },
    Variety {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe: Option<ProbeSpec>,
        #[serde(default)]
        refine: RefineSpec,
        #[serde(default = "default_slice_tol")]
        slice_tol: f64,
    },
    Check {
        /// Upper bound on the time of every conservation trace.
        #[serde(default = "default_check_time")]
        max_time: f64,
        /// Flattened critical points whose index must match the slice.
        #[serde(default)]
        critical: Vec<Vec<f64>>,
    },
}

fn default_delta() -> f64 {
    0.5
}
fn default_check_time() -> f64 {
    100.0
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Flow { .. } => "flow",
            ExperimentSpec::Critical { .. } => "critical",
            ExperimentSpec::Slice { .. } => "slice",
            ExperimentSpec::Strata { .. } => "strata",
            ExperimentSpec::Lines { .. } => "lines",
            ExperimentSpec::Broken { .. } => "broken",
            ExperimentSpec::Retract { .. } => "retract",
            ExperimentSpec::Variety { .. } => "variety",
            ExperimentSpec::Check { .. } => "check",
        }
    }

    fn needs_quiver(&self) -> bool {
        !matches!(self, ExperimentSpec::Retract { .. })
    }
}

/// A validated configuration: the flow problem (absent for the model scenes),
/// the subvariety, the initial points and any non-fatal warnings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub flow: Option<GradientFlow>,
    pub variety: SubvarietySpec,
    pub points: Vec<Representation>,
    pub warnings: Vec<String>,
}

impl Problem {
    pub fn flow(&self) -> &GradientFlow {
        self.flow.as_ref().expect("flow problem validated for this kind")
    }

    pub fn space(&self) -> &RepSpace {
        &self.flow().space
    }

    /// A flattened point from the config, validated against the space.
    pub fn point(&self, field: &str, v: &[f64]) -> Result<Representation, ConfigError> {
        flat_point(self.space(), field, v)
    }

    pub fn scene(&self) -> Option<RetractScene> {
        match &self.config.experiment {
            ExperimentSpec::Retract { scene, eps, delta, .. } => Some(RetractScene {
                kind: match scene {
                    SceneSpec::SmoothSaddle => SceneKind::SmoothSaddle,
                    SceneSpec::SlitQuotient => SceneKind::SlitQuotient,
                },
                eps: *eps,
                delta: *delta,
            }),
            _ => None,
        }
    }
}

fn flat_point(space: &RepSpace, field: &str, v: &[f64]) -> Result<Representation, ConfigError> {
    if v.len() != space.real_dim() {
        return Err(ConfigError::new(field, format!("expected {} reals, got {}", space.real_dim(), v.len())));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(ConfigError::new(format!("{field}[{i}]"), "must be finite"));
    }
    Ok(space.unflatten(v))
}

/// Parse a configuration, reporting the failing field path and position.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            field: if path == "." { "<root>".into() } else { path },
            message: inner.to_string(),
            location: Some((inner.line(), inner.column())),
        }
    })?;
    Ok(cfg)
}

fn edge_path(quiver: &Quiver, field: &str, names: &[String]) -> Result<Vec<usize>, ConfigError> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            quiver.edge_index(n).ok_or_else(|| ConfigError::new(format!("{field}[{i}]"), format!("unknown edge {n:?}")))
        })
        .collect()
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be finite, got {v}")))
    }
}

fn build_space(cfg: &ExperimentConfig) -> Result<RepSpace, ConfigError> {
    let qs = cfg.quiver.as_ref().ok_or_else(|| ConfigError::new("quiver", "required for this experiment kind"))?;
    let mut edges = Vec::new();
    for (a, e) in qs.edges.iter().enumerate() {
        let vertex = |end: &str, name: &str| {
            qs.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| ConfigError::new(format!("quiver.edges[{a}].{end}"), format!("unknown vertex {name:?}")))
        };
        edges.push(Edge { name: e.name.clone(), tail: vertex("tail", &e.tail)?, head: vertex("head", &e.head)? });
    }
    let quiver = Quiver::new(qs.vertices.clone(), edges).map_err(|e| ConfigError::new("quiver", e.to_string()))?;
    if cfg.dims.len() != quiver.vertex_count() {
        return Err(ConfigError::new(
            "dims",
            format!("expected {} entries, got {}", quiver.vertex_count(), cfg.dims.len()),
        ));
    }
    let mut dims = Vec::new();
    for (i, &d) in cfg.dims.iter().enumerate() {
        if d < 0 {
            return Err(ConfigError::new(format!("dims[{i}]"), format!("dimension must be nonnegative, got {d}")));
        }
        dims.push(d as usize);
    }
    RepSpace::new(quiver, DimensionVector::new(dims)).map_err(|e| ConfigError::new("dims", e.to_string()))
}

/// Validate a parsed configuration into a runnable problem.
pub fn validate(cfg: ExperimentConfig) -> Result<Problem, ConfigError> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::new(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
        ));
    }
    let mut warnings = Vec::new();
    let integrator = cfg.integrator.resolve();
    integrator.validate().map_err(|e| ConfigError::new("integrator", e.to_string()))?;

    let (flow, variety, points) = if cfg.experiment.needs_quiver() {
        let space = build_space(&cfg)?;
        let quiver = space.quiver().clone();
        if cfg.alpha.len() != quiver.vertex_count() {
            return Err(ConfigError::new(
                "alpha",
                format!("expected {} entries, got {}", quiver.vertex_count(), cfg.alpha.len()),
            ));
        }
        for (i, &a) in cfg.alpha.iter().enumerate() {
            finite(&format!("alpha[{i}]"), a)?;
        }
        let mut relations = Vec::new();
        for (k, r) in cfg.relations.iter().enumerate() {
            let mut terms = Vec::new();
            for (j, t) in r.terms.iter().enumerate() {
                let field = format!("relations[{k}].terms[{j}]");
                finite(&format!("{field}.coeff[0]"), t.coeff[0])?;
                finite(&format!("{field}.coeff[1]"), t.coeff[1])?;
                terms.push((C64::new(t.coeff[0], t.coeff[1]), edge_path(&quiver, &format!("{field}.path"), &t.path)?));
            }
            relations.push(
                Relation::new(&quiver, r.name.clone(), terms)
                    .map_err(|e| ConfigError::new(format!("relations[{k}]"), e.to_string()))?,
            );
        }
        let tol = cfg.residual_tol.unwrap_or(RESIDUAL_TOL);
        positive("residual_tol", tol)?;
        let variety = SubvarietySpec::new(&space, relations.clone(), tol)
            .map_err(|e| ConfigError::new("relations", e.to_string()))?;
        let mut cycles = Vec::new();
        for (k, c) in cfg.cycles.iter().enumerate() {
            let path = edge_path(&quiver, &format!("cycles[{k}].path"), &c.path)?;
            cycles.push(
                CycleWord::new(&quiver, c.name.clone(), path)
                    .map_err(|e| ConfigError::new(format!("cycles[{k}]"), e.to_string()))?,
            );
        }
        let mut points = Vec::new();
        for (i, v) in cfg.points.explicit.iter().enumerate() {
            points.push(flat_point(&space, &format!("points.explicit[{i}]"), v)?);
        }
        if let Some(r) = &cfg.points.random {
            positive("points.random.scale", r.scale)?;
            for k in 0..r.count as u64 {
                let mut rng = sampling::stream_rng(cfg.seed, k);
                points.push(space.random(&mut rng, r.scale));
            }
        }
        let flow = GradientFlow::new(space, CentralShift(cfg.alpha.clone()), integrator)
            .with_monitors(Monitors { cycles, relations });
        (Some(flow), variety, points)
    } else {
        if cfg.quiver.is_some() || !cfg.points.explicit.is_empty() || cfg.points.random.is_some() {
            warnings.push(format!("quiver and points are ignored by the {} experiment", cfg.experiment.kind()));
        }
        (None, SubvarietySpec::empty(), Vec::new())
    };

    let problem = Problem { config: cfg, flow, variety, points, warnings };
    validate_experiment(&problem)?;
    let mut problem = problem;
    if problem.flow.is_some() && problem.points.is_empty() && needs_points(&problem.config.experiment) {
        problem.warnings.push("no initial points configured".into());
    }
    Ok(problem)
}

fn needs_points(e: &ExperimentSpec) -> bool {
    matches!(
        e,
        ExperimentSpec::Flow { .. }
            | ExperimentSpec::Critical { .. }
            | ExperimentSpec::Slice { .. }
            | ExperimentSpec::Strata { .. }
            | ExperimentSpec::Lines { .. }
            | ExperimentSpec::Check { .. }
    )
}

fn validate_refine(r: &RefineSpec) -> Result<(), ConfigError> {
    positive("experiment.refine.tol", r.tol)?;
    if r.flow_time < 0.0 || !r.flow_time.is_finite() {
        return Err(ConfigError::new("experiment.refine.flow_time", "must be nonnegative and finite"));
    }
    Ok(())
}

fn validate_experiment(p: &Problem) -> Result<(), ConfigError> {
    match &p.config.experiment {
        ExperimentSpec::Flow { level, tau_levels, condition2, .. } => {
            if let Some(l) = level {
                finite("experiment.level", *l)?;
            }
            for (i, l) in tau_levels.iter().enumerate() {
                finite(&format!("experiment.tau_levels[{i}]"), *l)?;
            }
            if let Some(w) = condition2 {
                finite("experiment.condition2.a", w.a)?;
                finite("experiment.condition2.b", w.b)?;
                if !(w.a < w.b) {
                    return Err(ConfigError::new("experiment.condition2", "requires a < b"));
                }
            }
        }
        ExperimentSpec::Critical { refine, slice_tol, fit_tail } => {
            validate_refine(refine)?;
            positive("experiment.slice_tol", *slice_tol)?;
            if let TailSpec::RelativeGap(r) = fit_tail {
                positive("experiment.fit_tail.relative_gap", *r)?;
            }
        }
        ExperimentSpec::Slice { refine, slice_tol, eps, delta0, .. } => {
            validate_refine(refine)?;
            positive("experiment.slice_tol", *slice_tol)?;
            positive("experiment.eps", *eps)?;
            positive("experiment.delta0", *delta0)?;
        }
        ExperimentSpec::Strata { unstable } => {
            if let Some(u) = unstable {
                p.point("experiment.unstable.critical", &u.critical)?;
                positive("experiment.unstable.eps", u.eps)?;
                positive("experiment.unstable.delta0", u.delta0)?;
                if u.margin < 0.0 || !u.margin.is_finite() {
                    return Err(ConfigError::new("experiment.unstable.margin", "must be nonnegative and finite"));
                }
            }
        }
        ExperimentSpec::Lines { z } => finite("experiment.z", *z)?,
        ExperimentSpec::Broken { base, direction, params, levels, dwell_tol, match_tol, limits } => {
            p.point("experiment.base", base)?;
            p.point("experiment.direction", direction)?;
            if params.len() < 2 {
                return Err(ConfigError::new("experiment.params", "needs at least two family members"));
            }
            for (i, s) in params.iter().enumerate() {
                finite(&format!("experiment.params[{i}]"), *s)?;
            }
            if levels.is_empty() {
                return Err(ConfigError::new("experiment.levels", "needs at least one level"));
            }
            for (i, l) in levels.iter().enumerate() {
                finite(&format!("experiment.levels[{i}]"), *l)?;
            }
            positive("experiment.dwell_tol", *dwell_tol)?;
            positive("experiment.match_tol", *match_tol)?;
            if !limits.is_empty() && limits.len() != levels.len() {
                return Err(ConfigError::new("experiment.limits", "needs one point per level"));
            }
            for (i, l) in limits.iter().enumerate() {
                p.point(&format!("experiment.limits[{i}]"), l)?;
            }
        }
        ExperimentSpec::Retract { eps, delta, grid, censuses, condition4, suite, scene } => {
            positive("experiment.eps", *eps)?;
            positive("experiment.delta", *delta)?;
            if *grid < 2 {
                return Err(ConfigError::new("experiment.grid", "must be at least 2"));
            }
            for (i, c) in censuses.iter().enumerate() {
                finite(&format!("experiment.censuses[{i}].sublevel"), c.sublevel)?;
            }
            if let Some(c4) = condition4 {
                positive("experiment.condition4.radius", c4.radius)?;
                if c4.samples == 0 {
                    return Err(ConfigError::new("experiment.condition4.samples", "must be positive"));
                }
                if let Some(w) = c4.window {
                    positive("experiment.condition4.window", w)?;
                }
            }
            if let Some(s) = suite {
                if *scene != SceneSpec::SmoothSaddle {
                    return Err(ConfigError::new("experiment.suite", "the retract suite needs the smooth saddle"));
                }
                if let Some(m) = &s.modulus {
                    if m.n < 2 {
                        return Err(ConfigError::new("experiment.suite.modulus.n", "must be at least 2"));
                    }
                    for (i, v) in m.s_values.iter().enumerate() {
                        if !(0.0..=1.0).contains(v) {
                            return Err(ConfigError::new(format!("experiment.suite.modulus.s_values[{i}]"), "must lie in [0, 1]"));
                        }
                    }
                }
            }
        }
        ExperimentSpec::Variety { probe, refine, slice_tol } => {
            validate_refine(refine)?;
            positive("experiment.slice_tol", *slice_tol)?;
            if let Some(pr) = probe {
                p.point("experiment.probe.critical", &pr.critical)?;
                positive("experiment.probe.eps", pr.eps)?;
                positive("experiment.probe.delta0", pr.delta0)?;
            }
        }
        ExperimentSpec::Check { max_time, critical } => {
            positive("experiment.max_time", *max_time)?;
            for (i, c) in critical.iter().enumerate() {
                p.point(&format!("experiment.critical[{i}]"), c)?;
            }
        }
    }
    Ok(())
}

/// Parse and validate in one step.
pub fn load(text: &str) -> Result<Problem, ConfigError> {
    validate(parse_config(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A2: &str = r#"{
        "schema_version": 1,
        "quiver": {"vertices": ["1", "2"], "edges": [{"name": "a", "tail": "1", "head": "2"}]},
        "dims": [1, 1],
        "alpha": [-1, 1],
        "seed": 7,
        "points": {"explicit": [[0.3, 0.1]], "random": {"count": 2}},
        "experiment": {"kind": "flow"}
    }"#;

    #[test]
    fn parses_and_validates() {
        let p = load(A2).unwrap();
        assert_eq!(p.points.len(), 3);
        assert_eq!(p.config.experiment.kind(), "flow");
        assert!(p.warnings.is_empty());
        assert_eq!(p.flow().cfg, IntegratorConfig::default());
    }

    #[test]
    fn random_points_are_seeded() {
        let a = load(A2).unwrap();
        let b = load(A2).unwrap();
        assert_eq!(a.points, b.points);
        let c = load(&A2.replace("\"seed\": 7", "\"seed\": 8")).unwrap();
        assert_ne!(a.points[1], c.points[1]);
    }

    #[test]
    fn negative_dimension_names_field() {
        let e = load(&A2.replace("[1, 1]", "[1, -1]")).unwrap_err();
        assert_eq!(e.field, "dims[1]");
    }

    #[test]
    fn type_errors_carry_path_and_position() {
        let e = load(&A2.replace("\"seed\": 7", "\"seed\": \"x\"")).unwrap_err();
        assert_eq!(e.field, "seed");
        assert!(e.location.is_some());
        let e = load(&A2.replace("\"kind\": \"flow\"", "\"kind\": \"flow\", \"bogus\": 1")).unwrap_err();
        assert!(e.field.starts_with("experiment"), "{e}");
    }

    #[test]
    fn semantic_errors_name_fields() {
        let e = load(&A2.replace("\"head\": \"2\"", "\"head\": \"3\"")).unwrap_err();
        assert_eq!(e.field, "quiver.edges[0].head");
        let e = load(&A2.replace("[[0.3, 0.1]]", "[[0.3]]")).unwrap_err();
        assert_eq!(e.field, "points.explicit[0]");
        let e = load(&A2.replace("\"schema_version\": 1", "\"schema_version\": 2")).unwrap_err();
        assert_eq!(e.field, "schema_version");
        let e = load(&A2.replace("{\"kind\": \"flow\"}", "{\"kind\": \"flow\", \"condition2\": {\"a\": 1, \"b\": 0}}"))
            .unwrap_err();
        assert_eq!(e.field, "experiment.condition2");
    }

    #[test]
    fn relations_resolve_edge_names() {
        let text = r#"{
            "schema_version": 1,
            "quiver": {"vertices": ["v"], "edges": [{"name": "x", "tail": "v", "head": "v"}, {"name": "y", "tail": "v", "head": "v"}]},
            "dims": [2], "alpha": [0], "seed": 1,
            "relations": [{"name": "comm", "terms": [{"coeff": [1, 0], "path": ["x", "y"]}, {"coeff": [-1, 0], "path": ["y", "z"]}]}],
            "experiment": {"kind": "variety"}
        }"#;
        let e = load(text).unwrap_err();
        assert_eq!(e.field, "relations[0].terms[1].path[1]");
        let p = load(&text.replace("\"z\"", "\"x\"")).unwrap();
        assert_eq!(p.variety.relations.len(), 1);
        assert_eq!(p.flow().monitors.names(), vec!["res_comm".to_string()]);
    }

    #[test]
    fn retract_needs_no_quiver() {
        let text = r#"{"schema_version": 1, "seed": 0,
            "experiment": {"kind": "retract", "scene": "slit_quotient", "eps": 0.1, "grid": 10}}"#;
        let p = load(text).unwrap();
        assert!(p.flow.is_none());
        assert_eq!(p.scene().unwrap().kind, SceneKind::SlitQuotient);
    }

    #[test]
    fn snapshot_roundtrips() {
        let p = load(A2).unwrap();
        let text = serde_json::to_string(&p.config).unwrap();
        assert_eq!(parse_config(&text).unwrap(), p.config);
    }
}
