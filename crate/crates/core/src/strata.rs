//! Stratum labels, sampling of unstable sets, flow lines between critical
//! points, and broken-flow-line experiments.

use rayon::prelude::*;

use crate::critical::{self, refine_critical, CriticalRecord, RefineOptions, SliceFiber};
use crate::error::{Error, Result};
use crate::flow::{Direction, FlowTrace, GradientFlow, LevelMapKind, TraceStatus};
use crate::quiver::Representation;
use crate::sampling;

pub const CLUSTER_TOL: f64 = 1e-5;
pub const VALUE_TOL: f64 = 1e-6;

/// Per-vertex spectra of `β` at the forward limit, and the limiting value.
#[derive(Clone, Debug, PartialEq)]
pub struct StratumLabel {
    /// Ascending, rounded to multiples of `CLUSTER_TOL`.
    pub spectra: Vec<Vec<f64>>,
    pub f_limit: f64,
}

fn round_to(v: f64, tol: f64) -> f64 {
    let r = (v / tol).round() * tol;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl StratumLabel {
    pub fn from_record(rec: &CriticalRecord) -> Self {
        let spectra = rec
            .beta_spectra
            .iter()
            .map(|s| s.iter().map(|&v| round_to(v, CLUSTER_TOL)).collect())
            .collect();
        Self { spectra, f_limit: rec.f_crit }
    }

    /// Spectra within `CLUSTER_TOL` entrywise and values within `VALUE_TOL`.
    pub fn same_stratum(&self, other: &Self) -> bool {
        (self.f_limit - other.f_limit).abs() < VALUE_TOL
            && self.spectra.len() == other.spectra.len()
            && self.spectra.iter().zip(&other.spectra).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= CLUSTER_TOL)
            })
    }
}

/// Refined forward limit of `x0` and its label.
pub fn stratum_label(flow: &GradientFlow, x0: &Representation) -> Result<StratumLabel> {
    let trace = flow.integrate(x0);
    if trace.status != TraceStatus::Converged {
        return Err(Error::Inconclusive(format!(
            "forward flow ended with {} at t = {}",
            trace.status.as_str(),
            trace.duration()
        )));
    }
    let rec = refine_critical(&flow.space, &flow.alpha, &trace.last().x, &RefineOptions::default())?;
    Ok(StratumLabel::from_record(&rec))
}

#[derive(Clone, Debug)]
pub struct UnstableSample {
    pub index: usize,
    /// Unit coefficients in the fiber basis.
    pub direction: Vec<f64>,
    pub seed: Representation,
    pub endpoint: Option<Representation>,
    /// Elapsed flow time, absent when the level is a limiting critical value.
    pub time: Option<f64>,
    pub error: Option<String>,
}

/// Seed `n` quasi-uniform fiber directions at radius `delta0` and flow each
/// to `f_crit − ε`.
pub fn sample_unstable_level(
    flow: &GradientFlow,
    rec: &CriticalRecord,
    fiber: &SliceFiber,
    eps: f64,
    n: usize,
    delta0: f64,
) -> Vec<UnstableSample> {
    if n == 0 || fiber.dim == 0 {
        return Vec::new();
    }
    let level = rec.f_crit - eps;
    sampling::sphere_directions(fiber.dim, n)
        .into_par_iter()
        .enumerate()
        .map(|(index, direction)| {
            let seed = rec.x.axpy(delta0, &fiber.vector(&flow.space, &direction));
            let (endpoint, time, error) = match flow.level_set_map(&seed, level) {
                Ok(m) => {
                    let time = match m.kind {
                        LevelMapKind::Crossed { time } => Some(time),
                        LevelMapKind::Limit => None,
                    };
                    (Some(m.point), time, None)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            UnstableSample { index, direction, seed, endpoint, time, error }
        })
        .collect()
}

/// Distance to the critical point after flowing an endpoint backward for its
/// recorded time plus `margin`.
pub fn unstable_membership(
    flow: &GradientFlow,
    rec: &CriticalRecord,
    sample: &UnstableSample,
    margin: f64,
) -> Option<f64> {
    let (end, t) = (sample.endpoint.as_ref()?, sample.time?);
    let back = flow.advance(end, Direction::Backward, t + margin).ok()?;
    Some(back.distance(&rec.x))
}

#[derive(Clone, Debug)]
pub struct FlowLine {
    pub anchor: Representation,
    pub z: f64,
    pub upper: Option<CriticalRecord>,
    pub lower: Option<CriticalRecord>,
    /// Why an endpoint is missing, if one is.
    pub missing: Option<String>,
    pub forward: FlowTrace,
    pub backward: FlowTrace,
}

fn limit_record(flow: &GradientFlow, trace: &FlowTrace) -> std::result::Result<CriticalRecord, String> {
    if trace.status != TraceStatus::Converged {
        return Err(format!(
            "{} flow ended with {}",
            match trace.direction {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            },
            trace.status.as_str()
        ));
    }
    refine_critical(&flow.space, &flow.alpha, &trace.last().x, &RefineOptions::default()).map_err(|e| e.to_string())
}

/// The flow line through `anchor`, normalized by `f(anchor) = z`.
pub fn flow_line(flow: &GradientFlow, anchor: &Representation, z: f64) -> Result<FlowLine> {
    let fz = flow.f(anchor);
    if (fz - z).abs() > 1e-8 * (1.0 + z.abs()) {
        return Err(Error::Precondition(format!("anchor has f = {fz}, expected {z}")));
    }
    if flow.gradnorm(anchor) < flow.cfg.grad_stop {
        return Err(Error::Precondition("anchor is a critical point".into()));
    }
    let forward = flow.integrate_dir(anchor, Direction::Forward);
    let backward = flow.integrate_dir(anchor, Direction::Backward);
    let mut missing = Vec::new();
    let lower = limit_record(flow, &forward).map_err(|e| missing.push(e)).ok();
    let upper = limit_record(flow, &backward).map_err(|e| missing.push(e)).ok();
    Ok(FlowLine {
        anchor: anchor.clone(),
        z,
        upper,
        lower,
        missing: if missing.is_empty() { None } else { Some(missing.join("; ")) },
        forward,
        backward,
    })
}

/// Interior samples where `‖grad f‖` has a local minimum below `dwell_tol`,
/// away from the final approach to the forward limit.
fn dwell_points(trace: &FlowTrace, dwell_tol: f64) -> Vec<usize> {
    let s = &trace.samples;
    let f_end = trace.last().f;
    (1..s.len().saturating_sub(1))
        .filter(|&k| {
            s[k].gradnorm < dwell_tol
                && s[k].gradnorm < s[k - 1].gradnorm
                && s[k].gradnorm <= s[k + 1].gradnorm
                && s[k].f - f_end > VALUE_TOL
        })
        .collect()
}

/// A one-parameter seed family `x0(s) = base + s · direction`, evaluated at
/// `params` (ordered so `s → s_∞` along the list), with checkpoint levels.
#[derive(Clone, Debug)]
pub struct BrokenLineExperiment {
    pub base: Representation,
    pub direction: Representation,
    pub params: Vec<f64>,
    pub levels: Vec<f64>,
    /// Gradient threshold for an intermediate dwell.
    pub dwell_tol: f64,
    /// Closest approach required between a limit checkpoint's trajectory and
    /// the chain members it connects.
    pub match_tol: f64,
}

#[derive(Clone, Debug)]
pub struct ConnectingCheck {
    pub level: f64,
    /// Chain indices `(k, k + 1)` of the segment the level lies on.
    pub segment: (usize, usize),
    pub backward_min_distance: f64,
    pub forward_min_distance: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct BrokenLineReport {
    /// `x_u = x_0, x_1, …, x_ℓ`, strictly decreasing in `f`.
    pub chain: Vec<CriticalRecord>,
    pub params: Vec<f64>,
    pub levels: Vec<f64>,
    /// `checkpoints[n][k]`: member `n` at level `k`.
    pub checkpoints: Vec<Vec<Representation>>,
    /// `cauchy[k][n] = ‖y_k^{n+1} − y_k^n‖`.
    pub cauchy: Vec<Vec<f64>>,
    /// `to_final[k][n] = ‖y_k^n − y_k^N‖`.
    pub to_final: Vec<Vec<f64>>,
    pub connecting: Vec<ConnectingCheck>,
    /// Forward limiting values from the final member's checkpoints.
    pub forward_limit_values: Vec<f64>,
    /// Every forward limit value is at least `f(x_ℓ) − VALUE_TOL`.
    pub semicontinuity_ok: bool,
    pub broken: bool,
    pub note: String,
}

impl BrokenLineReport {
    pub fn chain_values(&self) -> Vec<f64> {
        self.chain.iter().map(|r| r.f_crit).collect()
    }

    pub fn chain_strictly_decreasing(&self) -> bool {
        self.chain.windows(2).all(|w| w[0].f_crit - w[1].f_crit > VALUE_TOL)
    }

    /// `distances[k][n]` from each checkpoint to supplied reference limits.
    pub fn distances_to(&self, limits: &[Representation]) -> Vec<Vec<f64>> {
        limits
            .iter()
            .enumerate()
            .map(|(k, y)| self.checkpoints.iter().map(|row| row[k].distance(y)).collect())
            .collect()
    }
}

fn min_distance(trace: &FlowTrace, target: &Representation) -> f64 {
    trace.samples.iter().map(|s| s.x.distance(target)).fold(f64::INFINITY, f64::min)
}

impl BrokenLineExperiment {
    pub fn member(&self, s: f64) -> Representation {
        self.base.axpy(s, &self.direction)
    }

    pub fn run(&self, flow: &GradientFlow) -> Result<BrokenLineReport> {
        if self.params.is_empty() {
            return Err(Error::Precondition("seed family has no members".into()));
        }
        let opts = RefineOptions::default();
        let last_seed = self.member(*self.params.last().unwrap());

        let back = flow.integrate_dir(&last_seed, Direction::Backward);
        let upper = limit_record(flow, &back).map_err(|e| Error::Inconclusive(format!("no upper endpoint: {e}")))?;
        let fwd = flow.integrate(&last_seed);
        let lower = limit_record(flow, &fwd).map_err(|e| Error::Inconclusive(format!("no lower endpoint: {e}")))?;

        let mut middle: Vec<CriticalRecord> = Vec::new();
        for k in dwell_points(&fwd, self.dwell_tol) {
            let Ok(rec) = refine_critical(&flow.space, &flow.alpha, &fwd.samples[k].x, &opts) else { continue };
            let between = rec.f_crit < upper.f_crit - VALUE_TOL && rec.f_crit > lower.f_crit + VALUE_TOL;
            let fresh = middle.iter().all(|m| (m.f_crit - rec.f_crit).abs() > VALUE_TOL);
            if between && fresh {
                middle.push(rec);
            }
        }
        middle.sort_by(|a, b| b.f_crit.total_cmp(&a.f_crit));
        let broken = !middle.is_empty();
        let mut chain = vec![upper];
        chain.extend(middle);
        chain.push(lower);
        let values: Vec<f64> = chain.iter().map(|r| r.f_crit).collect();

        for &r in &self.levels {
            if !(r < values[0] && r > *values.last().unwrap()) {
                return Err(Error::Precondition(format!("checkpoint level {r} outside the chain range")));
            }
            if values.iter().any(|v| (v - r).abs() <= VALUE_TOL) {
                return Err(Error::Precondition(format!("checkpoint level {r} is a critical value")));
            }
        }

        let checkpoints: Vec<Vec<Representation>> = self
            .params
            .par_iter()
            .map(|&s| {
                let x0 = self.member(s);
                self.levels
                    .iter()
                    .map(|&r| flow.tau_level(&x0, r).map(|(_, y)| y))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let n = checkpoints.len();
        let cauchy = (0..self.levels.len())
            .map(|k| (0..n.saturating_sub(1)).map(|j| checkpoints[j + 1][k].distance(&checkpoints[j][k])).collect())
            .collect();
        let to_final = (0..self.levels.len())
            .map(|k| (0..n).map(|j| checkpoints[j][k].distance(&checkpoints[n - 1][k])).collect())
            .collect();

        let finals = &checkpoints[n - 1];
        let mut connecting = Vec::new();
        let mut forward_limit_values = Vec::new();
        for (k, &r) in self.levels.iter().enumerate() {
            let seg = values.iter().rposition(|&v| v > r).unwrap();
            let bwd = flow.integrate_dir(&finals[k], Direction::Backward);
            let fwd = flow.integrate(&finals[k]);
            forward_limit_values.push(fwd.last().f);
            let b = min_distance(&bwd, &chain[seg].x);
            let f = min_distance(&fwd, &chain[seg + 1].x);
            connecting.push(ConnectingCheck {
                level: r,
                segment: (seg, seg + 1),
                backward_min_distance: b,
                forward_min_distance: f,
                ok: b <= self.match_tol && f <= self.match_tol,
            });
        }
        let f_low = *values.last().unwrap();
        let semicontinuity_ok = forward_limit_values.iter().all(|&v| v >= f_low - VALUE_TOL);

        Ok(BrokenLineReport {
            chain,
            params: self.params.clone(),
            levels: self.levels.clone(),
            checkpoints,
            cauchy,
            to_final,
            connecting,
            forward_limit_values,
            semicontinuity_ok,
            broken,
            note: "one convergent seed family; other subsequences are not explored".into(),
        })
    }
}

/// A trace that dwelt near an intermediate critical value. Exploratory only.
#[derive(Clone, Debug)]
pub struct ExploratoryCandidate {
    pub seed: u64,
    pub start: Representation,
    pub values: Vec<f64>,
}

/// Random starts at the given scale, kept when the forward trace dwells at an
/// intermediate critical value strictly between its start and its limit.
pub fn search_three_level(
    flow: &GradientFlow,
    trials: usize,
    seed: u64,
    scale: f64,
    dwell_tol: f64,
) -> Vec<ExploratoryCandidate> {
    (0..trials as u64)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = sampling::stream_rng(seed, k);
            let start = flow.space.random(&mut rng, scale);
            let trace = flow.integrate(&start);
            if trace.status != TraceStatus::Converged {
                return None;
            }
            let f_end = trace.last().f;
            let mut values: Vec<f64> = dwell_points(&trace, dwell_tol)
                .into_iter()
                .filter_map(|i| {
                    refine_critical(&flow.space, &flow.alpha, &trace.samples[i].x, &RefineOptions::default()).ok()
                })
                .map(|r| r.f_crit)
                .filter(|&v| v > f_end + VALUE_TOL && v < trace.first().f)
                .collect();
            values.dedup_by(|a, b| (*a - *b).abs() < VALUE_TOL);
            if values.is_empty() {
                return None;
            }
            values.insert(0, trace.first().f);
            values.push(f_end);
            Some(ExploratoryCandidate { seed: k, start, values })
        })
        .collect()
}

/// Negative slice of a critical record with the default tolerances.
pub fn fiber_of(flow: &GradientFlow, rec: &CriticalRecord) -> SliceFiber {
    let wd = critical::weight_decomposition(&flow.space, rec);
    critical::negative_slice(&flow.space, rec, &wd, 1e-8)
}
