//! Closed `G`-invariant subvarieties cut out by quiver relations: membership,
//! Gauss–Newton projection for seeding, and the slice-versus-unstable-set
//! probe at a critical point on the subvariety.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::critical::{CriticalRecord, SliceFiber};
use crate::error::{Error, Result};
use crate::flow::{Direction, GradientFlow, LevelMapKind, Monitors, TraceStatus};
use crate::linalg::{self, CMat};
use crate::quiver::{GroupElement, Relation, RepSpace, Representation};
use crate::sampling;

pub const RESIDUAL_TOL: f64 = 1e-10;
/// Residual level along a trace that triggers a re-run at tighter tolerances.
pub const DRIFT_ALARM: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SubvarietySpec {
    pub relations: Vec<Relation>,
    pub residual_tol: f64,
}

/// Number of random group elements used for the covariance check.
const COVARIANCE_TRIALS: u64 = 4;

impl SubvarietySpec {
    /// Validates that every relation transforms as `r(g·x) = g_t r(x) g_s⁻¹`
    /// on a few random `(g, x)` pairs.
    pub fn new(space: &RepSpace, relations: Vec<Relation>, residual_tol: f64) -> Result<Self> {
        if !(residual_tol > 0.0) {
            return Err(Error::InvalidConfig("residual_tol must be positive".into()));
        }
        for r in &relations {
            for k in 0..COVARIANCE_TRIALS {
                let mut rng = sampling::stream_rng(0x5eed, k);
                let x = space.random(&mut rng, 1.0);
                let g = GroupElement::random_near_identity(space.dims(), &mut rng, 0.3);
                let inv = g.inverse_blocks(space.condition_bound)?;
                let lhs = space.relation_value(&space.act(&g, &x)?, r);
                let rhs: CMat = &g.blocks[r.target] * space.relation_value(&x, r) * &inv[r.source];
                let scale = 1.0 + linalg::frob2(&rhs).sqrt();
                if linalg::frob2(&(lhs - rhs)).sqrt() > 1e-9 * scale {
                    return Err(Error::InvalidRelation(format!("relation {:?} is not G-covariant", r.name)));
                }
            }
        }
        Ok(Self { relations, residual_tol })
    }

    pub fn empty() -> Self {
        Self { relations: Vec::new(), residual_tol: RESIDUAL_TOL }
    }

    pub fn residuals(&self, space: &RepSpace, x: &Representation) -> Vec<f64> {
        self.relations.iter().map(|r| space.relation_residual(x, r)).collect()
    }

    pub fn max_residual(&self, space: &RepSpace, x: &Representation) -> f64 {
        self.residuals(space, x).into_iter().fold(0.0, f64::max)
    }

    pub fn monitors(&self) -> Monitors {
        Monitors { cycles: Vec::new(), relations: self.relations.clone() }
    }

    /// Real and imaginary parts of every relation entry, stacked.
    fn residual_vector(&self, space: &RepSpace, x: &Representation) -> Vec<f64> {
        let mut out = Vec::new();
        for r in &self.relations {
            let v = space.relation_value(x, r);
            for z in v.iter() {
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    /// Central-difference Jacobian of the residual vector. Exact up to
    /// rounding for quadratic relations.
    fn jacobian(&self, space: &RepSpace, x: &Representation, step: f64) -> DMatrix<f64> {
        let base = space.flatten(x);
        let m = self.residual_vector(space, x).len();
        let n = base.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut probe = base.clone();
        for j in 0..n {
            probe[j] = base[j] + step;
            let rp = self.residual_vector(space, &space.unflatten(&probe));
            probe[j] = base[j] - step;
            let rm = self.residual_vector(space, &space.unflatten(&probe));
            probe[j] = base[j];
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        jac
    }
}

pub fn on_variety(space: &RepSpace, x: &Representation, spec: &SubvarietySpec) -> bool {
    spec.residuals(space, x).iter().all(|&r| r < spec.residual_tol)
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub point: Representation,
    pub distance: f64,
    pub residual: f64,
    pub iterations: usize,
}

const PROJECTION_MAX_ITER: usize = 50;

/// Minimum-norm Gauss–Newton steps onto the zero set of the relations.
pub fn project_to_variety(space: &RepSpace, x: &Representation, spec: &SubvarietySpec) -> Result<Projection> {
    space.check(x)?;
    let mut y = x.clone();
    let mut res = spec.max_residual(space, &y);
    let mut iterations = 0;
    if res < spec.residual_tol {
        return Ok(Projection { point: y, distance: 0.0, residual: res, iterations });
    }
    // a few steps past the tolerance, so a second projection is a no-op
    let target = 1e-3 * spec.residual_tol;
    while res >= target && iterations < PROJECTION_MAX_ITER {
        iterations += 1;
        let jac = spec.jacobian(space, &y, 1e-6);
        let rv = linalg::dvec(&spec.residual_vector(space, &y));
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let Ok(delta) = svd.solve(&rv, 1e-10 * smax.max(f64::MIN_POSITIVE)) else { break };
        let base = space.flatten(&y);
        let next: Vec<f64> = base.iter().zip(delta.iter()).map(|(b, d)| b - d).collect();
        let candidate = space.unflatten(&next);
        let r_new = spec.max_residual(space, &candidate);
        if !(r_new < res) {
            break;
        }
        y = candidate;
        res = r_new;
    }
    if res >= spec.residual_tol {
        return Err(Error::ProjectionFailed { best_residual: res });
    }
    Ok(Projection { distance: y.distance(x), point: y, residual: res, iterations })
}

#[derive(Clone, Debug)]
pub struct VarietySeed {
    pub direction: Vec<f64>,
    /// Distance moved by the projection of the seed.
    pub projection_distance: Option<f64>,
    /// Max relation residual at every trace sample.
    pub residual_history: Vec<f64>,
    pub max_residual: Option<f64>,
    pub endpoint: Option<Representation>,
    /// The trace was re-run at tighter tolerances after a residual drift alarm.
    pub tightened: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct VarietyProbeReport {
    pub fiber_dim: usize,
    /// Dimension of `{y ∈ S_x⁻ : dr_x(y) = 0}`.
    pub linear_dim: usize,
    /// Rank of the projected seed directions.
    pub sampled_dim: usize,
    pub seeds: Vec<VarietySeed>,
    /// Every sampled trace kept residuals below `10 · residual_tol`.
    pub residuals_ok: bool,
    pub agree: bool,
}

/// Compares the linearized slice of `Z` at a critical point with samples of
/// `W_x⁻ ∩ Z` obtained by seeding fiber directions, projecting to `Z`, and
/// flowing to `f(x) − ε`. Reports, does not assert, agreement.
pub fn slice_variety_probe(
    flow: &GradientFlow,
    rec: &CriticalRecord,
    fiber: &SliceFiber,
    spec: &SubvarietySpec,
    eps: f64,
    n_seeds: usize,
    delta0: f64,
) -> Result<VarietyProbeReport> {
    let space = &flow.space;
    if !on_variety(space, &rec.x, spec) {
        return Err(Error::Precondition("critical point is not on the subvariety".into()));
    }
    let linear_dim = if fiber.dim == 0 || spec.relations.is_empty() {
        fiber.dim
    } else {
        let jac = spec.jacobian(space, &rec.x, 1e-6);
        let basis = DMatrix::from_fn(space.real_dim(), fiber.dim, |r, c| fiber.basis[c][r]);
        let restricted = jac * basis;
        linalg::null_basis(&restricted, 1e-8).ncols()
    };
    let flow = flow.clone().with_monitors(spec.monitors());
    let level = rec.f_crit - eps;
    let seeds: Vec<VarietySeed> = sampling::sphere_directions(fiber.dim, if fiber.dim == 0 { 0 } else { n_seeds })
        .into_par_iter()
        .map(|direction| {
            let raw = rec.x.axpy(delta0, &fiber.vector(space, &direction));
            let proj = match project_to_variety(space, &raw, spec) {
                Ok(p) => p,
                Err(e) => {
                    return VarietySeed {
                        direction,
                        projection_distance: None,
                        residual_history: Vec::new(),
                        max_residual: None,
                        endpoint: None,
                        tightened: false,
                        error: Some(e.to_string()),
                    }
                }
            };
            let run = |f: &GradientFlow| {
                let trace = f.integrate_to_level(&proj.point, Direction::Forward, level);
                let history: Vec<f64> =
                    trace.samples.iter().map(|s| s.monitors.iter().copied().fold(0.0, f64::max)).collect();
                (trace, history)
            };
            let (mut trace, mut history) = run(&flow);
            let mut tightened = false;
            if history.iter().any(|&r| r > DRIFT_ALARM) {
                let mut tight = flow.clone();
                tight.cfg.rel_tol *= 1e-2;
                tight.cfg.abs_tol *= 1e-2;
                tight.cfg.max_step *= 0.1;
                (trace, history) = run(&tight);
                tightened = true;
            }
            let reached = trace.status == TraceStatus::ExitedLevel
                || flow.level_set_map(&proj.point, level).map(|m| matches!(m.kind, LevelMapKind::Limit)).unwrap_or(false);
            VarietySeed {
                direction,
                projection_distance: Some(proj.distance),
                max_residual: Some(history.iter().copied().fold(0.0, f64::max)),
                residual_history: history,
                endpoint: reached.then(|| trace.last().x.clone()),
                tightened,
                error: (!reached).then(|| format!("level {level} not reached: {}", trace.status.as_str())),
            }
        })
        .collect();
    let residuals_ok = seeds.iter().all(|s| s.max_residual.is_some_and(|r| r < 10.0 * spec.residual_tol));
    let dirs: Vec<Vec<f64>> = seeds
        .iter()
        .filter(|s| s.error.is_none())
        .filter_map(|s| {
            let raw = rec.x.axpy(delta0, &fiber.vector(space, &s.direction));
            let p = project_to_variety(space, &raw, spec).ok()?;
            let d = space.flatten(&p.point.sub(&rec.x));
            let n = linalg::norm(&d);
            (n > 0.0).then(|| d.into_iter().map(|v| v / n).collect())
        })
        .collect();
    let sampled_dim = if dirs.is_empty() {
        0
    } else {
        let m = DMatrix::from_fn(space.real_dim(), dirs.len(), |r, c| dirs[c][r]);
        linalg::numerical_rank(&m, 1e-3)
    };
    Ok(VarietyProbeReport {
        fiber_dim: fiber.dim,
        linear_dim,
        sampled_dim,
        agree: linear_dim == sampled_dim,
        residuals_ok: residuals_ok || seeds.is_empty(),
        seeds,
    })
}
