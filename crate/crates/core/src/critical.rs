//! Critical points of `f`: refinement, `β` and its weights, the negative
//! slice, Morse index cross-checks and Lojasiewicz exponent estimates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{Direction, FlowTrace, GradientFlow, IntegratorConfig, TraceStatus};
use crate::linalg::{self, CMat, C64, RANK_TOL};
use crate::moment::{self, CentralShift, HermitianCollection, HessianStatus, HESSIAN_STEP};
use crate::quiver::{RepSpace, Representation};
use crate::sampling;

/// Default gradient threshold for a refined critical point.
pub const CRITICAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CriticalRecord {
    pub x: Representation,
    pub f_crit: f64,
    /// `β = μ(x) − α`.
    pub beta: HermitianCollection,
    /// Ascending eigenvalues of each `β_i`.
    pub beta_spectra: Vec<Vec<f64>>,
    /// `‖grad f(x)‖`.
    pub grad_residual: f64,
}

impl CriticalRecord {
    pub fn assemble(space: &RepSpace, alpha: &CentralShift, x: Representation) -> Self {
        let beta = moment::shifted_moment(space, &x, alpha);
        Self {
            f_crit: beta.norm_sqr(),
            beta_spectra: beta.spectra(),
            grad_residual: moment::gradient_norm(space, &x, alpha),
            beta,
            x,
        }
    }

    /// `‖ρ_x(β)‖`.
    pub fn criticality_residual(&self, space: &RepSpace) -> f64 {
        space.infinitesimal_action(&self.beta.as_lie(), &self.x).norm()
    }
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Length of the initial forward-flow continuation.
    pub flow_time: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { tol: CRITICAL_TOL, max_iter: 60, flow_time: 2.0 }
    }
}

/// Refine an approximate critical point: a short forward flow, then
/// Gauss–Newton on `grad f` with an SVD pseudo-inverse of the Hessian.
pub fn refine_critical(
    space: &RepSpace,
    alpha: &CentralShift,
    x_approx: &Representation,
    opts: &RefineOptions,
) -> Result<CriticalRecord> {
    space.check(x_approx)?;
    let gnorm = |x: &Representation| moment::gradient_norm(space, x, alpha);
    let mut x = x_approx.clone();
    let mut g = gnorm(&x);
    if g < opts.tol {
        return Ok(CriticalRecord::assemble(space, alpha, x));
    }

    let cfg = IntegratorConfig { max_time: opts.flow_time, grad_stop: opts.tol, ..Default::default() };
    let flow = GradientFlow::new(space.clone(), alpha.clone(), cfg);
    let trace = flow.integrate(&x);
    let last = trace.last();
    if last.gradnorm < g && last.x.is_finite() {
        x = last.x.clone();
        g = last.gradnorm;
    }

    let mut iterations = 0;
    while g >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::RefinementFailed { iterations, best_residual: g });
        }
        iterations += 1;
        let hess = moment::hessian_fd(space, &x, alpha, HESSIAN_STEP);
        let grad = linalg::dvec(&space.flatten(&moment::gradient(space, &x, alpha)));
        let svd = hess.matrix.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let delta = svd
            .solve(&grad, 1e-9 * smax.max(f64::MIN_POSITIVE))
            .map_err(|_| Error::RefinementFailed { iterations, best_residual: g })?;
        let base = space.flatten(&x);
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = base.iter().zip(delta.iter()).map(|(b, d)| b - step * d).collect();
            let xt = space.unflatten(&trial);
            let gt = gnorm(&xt);
            if gt < g {
                x = xt;
                g = gt;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return Err(Error::RefinementFailed { iterations, best_residual: g });
        }
    }
    Ok(CriticalRecord::assemble(space, alpha, x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSign {
    Negative,
    Zero,
    Positive,
}

/// Entries of one edge block grouped by the sign of their weight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgePartition {
    pub negative: Vec<(usize, usize)>,
    pub zero: Vec<(usize, usize)>,
    pub positive: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct WeightDecomposition {
    /// Unitary per vertex whose columns diagonalize `β_i`, eigenvalues ascending.
    pub vertex_frames: Vec<CMat>,
    /// Eigenvalues with near-equal values merged to their mean.
    pub vertex_eigenvalues: Vec<Vec<f64>>,
    /// `w_pq = λ^{h(a)}_p − λ^{t(a)}_q`.
    pub edge_weights: Vec<DMatrix<f64>>,
    pub weight_tol: f64,
}

impl WeightDecomposition {
    pub fn sign(&self, a: usize, p: usize, q: usize) -> WeightSign {
        let w = self.edge_weights[a][(p, q)];
        if w < -self.weight_tol {
            WeightSign::Negative
        } else if w > self.weight_tol {
            WeightSign::Positive
        } else {
            WeightSign::Zero
        }
    }

    pub fn partitions(&self) -> Vec<EdgePartition> {
        self.edge_weights
            .iter()
            .enumerate()
            .map(|(a, w)| {
                let mut part = EdgePartition::default();
                for p in 0..w.nrows() {
                    for q in 0..w.ncols() {
                        match self.sign(a, p, q) {
                            WeightSign::Negative => part.negative.push((p, q)),
                            WeightSign::Zero => part.zero.push((p, q)),
                            WeightSign::Positive => part.positive.push((p, q)),
                        }
                    }
                }
                part
            })
            .collect()
    }

    /// `x_a` written in the vertex frames, `U_{h(a)}† x_a U_{t(a)}`.
    pub fn in_frames(&self, space: &RepSpace, x: &Representation) -> Representation {
        let q = space.quiver();
        let blocks = x
            .blocks
            .iter()
            .enumerate()
            .map(|(a, xa)| self.vertex_frames[q.head(a)].adjoint() * xa * &self.vertex_frames[q.tail(a)])
            .collect();
        Representation { blocks }
    }

    /// Norm of the part of `x` on nonzero-weight entries.
    pub fn nonzero_weight_mass(&self, space: &RepSpace, x: &Representation) -> f64 {
        let y = self.in_frames(space, x);
        let mut acc = 0.0;
        for (a, ya) in y.blocks.iter().enumerate() {
            for p in 0..ya.nrows() {
                for q in 0..ya.ncols() {
                    if self.sign(a, p, q) != WeightSign::Zero {
                        acc += ya[(p, q)].norm_sqr();
                    }
                }
            }
        }
        acc.sqrt()
    }
}

fn merge_close(values: &[f64], tol: f64) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && values[end] - values[end - 1] <= tol {
            end += 1;
        }
        let mean = values[start..end].iter().sum::<f64>() / (end - start) as f64;
        out[start..end].iter_mut().for_each(|v| *v = mean);
        start = end;
    }
    out
}

pub fn weight_decomposition(space: &RepSpace, rec: &CriticalRecord) -> WeightDecomposition {
    let eig: Vec<(Vec<f64>, CMat)> = rec.beta.blocks.iter().map(linalg::hermitian_eigen).collect();
    let max_abs = eig.iter().flat_map(|(v, _)| v.iter()).map(|l| l.abs()).fold(0.0, f64::max);
    let weight_tol = 1e-7 * (1.0 + max_abs);
    let vertex_eigenvalues: Vec<Vec<f64>> = eig.iter().map(|(v, _)| merge_close(v, weight_tol)).collect();
    let q = space.quiver();
    let edge_weights = (0..q.edge_count())
        .map(|a| {
            let (h, t) = (&vertex_eigenvalues[q.head(a)], &vertex_eigenvalues[q.tail(a)]);
            DMatrix::from_fn(h.len(), t.len(), |p, s| h[p] - t[s])
        })
        .collect();
    WeightDecomposition {
        vertex_frames: eig.into_iter().map(|(_, u)| u).collect(),
        vertex_eigenvalues,
        edge_weights,
        weight_tol,
    }
}

/// Orthonormal real basis of the negative slice `S_x⁻`, as flattened vectors.
#[derive(Clone, Debug)]
pub struct SliceFiber {
    pub basis: Vec<Vec<f64>>,
    pub dim: usize,
}

impl SliceFiber {
    /// `Σ c_k e_k` as a representation.
    pub fn vector(&self, space: &RepSpace, coeffs: &[f64]) -> Representation {
        let mut v = vec![0.0; space.real_dim()];
        for (c, e) in coeffs.iter().zip(&self.basis) {
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi += c * ei;
            }
        }
        space.unflatten(&v)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((linalg::dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// Flattened real directions `E` and `iE` for every negative-weight entry,
/// `E = u^{h}_p (u^{t}_q)†`.
fn negative_directions(space: &RepSpace, wd: &WeightDecomposition) -> Vec<Vec<f64>> {
    let q = space.quiver();
    let mut out = Vec::new();
    for (a, part) in wd.partitions().iter().enumerate() {
        let (uh, ut) = (&wd.vertex_frames[q.head(a)], &wd.vertex_frames[q.tail(a)]);
        for &(p, s) in &part.negative {
            let e = uh.column(p) * ut.column(s).adjoint();
            for phase in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut rep = space.zero();
                rep.blocks[a] = &e * phase;
                out.push(space.flatten(&rep));
            }
        }
    }
    out
}

/// `(span of negative-weight directions) ∩ (im ρ_x)^⊥`.
pub fn negative_slice(space: &RepSpace, rec: &CriticalRecord, wd: &WeightDecomposition, tol: f64) -> SliceFiber {
    let dirs = negative_directions(space, wd);
    if dirs.is_empty() {
        return SliceFiber { basis: Vec::new(), dim: 0 };
    }
    let n = space.real_dim();
    let neg = DMatrix::from_fn(n, dirs.len(), |r, c| dirs[c][r]);
    let range = linalg::range_basis(&space.rho_matrix(&rec.x), RANK_TOL);
    let kernel = if range.ncols() == 0 {
        DMatrix::identity(dirs.len(), dirs.len())
    } else {
        linalg::null_basis(&(range.transpose() * &neg), tol)
    };
    let slice = &neg * kernel;
    let basis: Vec<Vec<f64>> = slice.column_iter().map(|c| c.iter().copied().collect()).collect();
    SliceFiber { dim: basis.len(), basis }
}

/// Norm of the projection of `v` onto the negative-weight span.
pub fn negative_weight_fraction(space: &RepSpace, wd: &WeightDecomposition, v: &[f64]) -> f64 {
    negative_directions(space, wd).iter().map(|d| linalg::dot(d, v).powi(2)).sum::<f64>().sqrt()
        / linalg::norm(v).max(f64::MIN_POSITIVE)
}

/// Largest `|⟨e, r⟩|` for `e` in the fiber and `r` a unit vector of `im ρ_x`.
pub fn orbit_overlap(space: &RepSpace, rec: &CriticalRecord, fiber: &SliceFiber) -> f64 {
    let range = linalg::range_basis(&space.rho_matrix(&rec.x), RANK_TOL);
    let mut worst: f64 = 0.0;
    for e in &fiber.basis {
        for c in range.column_iter() {
            worst = worst.max(c.iter().zip(e).map(|(a, b)| a * b).sum::<f64>().abs());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexStatus {
    Determinate,
    /// Some eigenvalue fell in the band between numerical zero and a clear sign.
    Indeterminate,
    /// The difference Hessian was not symmetric enough to trust.
    Unreliable,
}

#[derive(Clone, Debug)]
pub struct MorseIndexReport {
    pub slice_dim: usize,
    pub hessian_index: usize,
    pub agree: bool,
    pub status: IndexStatus,
    pub hessian_eigenvalues: Vec<f64>,
}

/// Eigenvalues with `|λ| ≤ 1e-9·scale` count as zero, `λ < −1e-6·scale` as
/// negative, and anything between makes the comparison indeterminate.
pub fn morse_index_check(
    space: &RepSpace,
    rec: &CriticalRecord,
    fiber: &SliceFiber,
    alpha: &CentralShift,
) -> MorseIndexReport {
    let hess = moment::hessian_fd(space, &rec.x, alpha, HESSIAN_STEP);
    let scale = hess.scale();
    let ambiguous = hess.eigenvalues.iter().any(|l| l.abs() > 1e-9 * scale && l.abs() <= 1e-6 * scale);
    let status = if hess.status == HessianStatus::Cancellation {
        IndexStatus::Unreliable
    } else if ambiguous {
        IndexStatus::Indeterminate
    } else {
        IndexStatus::Determinate
    };
    let hessian_index = hess.negative_count();
    MorseIndexReport {
        slice_dim: fiber.dim,
        hessian_index,
        agree: fiber.dim == hessian_index,
        status,
        hessian_eigenvalues: hess.eigenvalues,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LojasiewiczFit {
    pub theta: f64,
    /// `exp` of the fitted intercept.
    pub c: f64,
    /// Largest `C` with `‖grad f‖ ≥ C |Δf|^{1−θ}` on every fitted sample.
    pub c_lower: f64,
    pub r2: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailSelection {
    /// Samples with `|f − f_crit|` at most this fraction of the largest gap.
    RelativeGap(f64),
    All,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit of `log ‖grad f‖` against `log |f − f_crit|` over the
/// tail of a trace (gaps within `1e-3` of the largest one).
pub fn lojasiewicz_fit(trace: &FlowTrace, f_crit: f64) -> Result<LojasiewiczFit> {
    lojasiewicz_fit_with(trace, f_crit, TailSelection::RelativeGap(1e-3))
}

pub fn lojasiewicz_fit_with(trace: &FlowTrace, f_crit: f64, tail: TailSelection) -> Result<LojasiewiczFit> {
    fit_pairs(&usable_pairs(std::slice::from_ref(trace), f_crit, tail))
}

fn usable_pairs(traces: &[FlowTrace], f_crit: f64, tail: TailSelection) -> Vec<(f64, f64)> {
    let floor = 1e-13 * (1.0 + f_crit.abs());
    let all: Vec<(f64, f64)> = traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .map(|s| ((s.f - f_crit).abs(), s.gradnorm))
        .filter(|&(df, g)| df > floor && g > 0.0 && df.is_finite() && g.is_finite())
        .collect();
    match tail {
        TailSelection::All => all,
        TailSelection::RelativeGap(r) => {
            let top = all.iter().map(|p| p.0).fold(0.0, f64::max);
            all.into_iter().filter(|p| p.0 <= r * top).collect()
        }
    }
}

fn fit_pairs(pairs: &[(f64, f64)]) -> Result<LojasiewiczFit> {
    if pairs.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { available: pairs.len(), required: MIN_FIT_SAMPLES });
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData { available: 1, required: MIN_FIT_SAMPLES });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let c_lower = pairs.iter().map(|&(df, g)| g / df.powf(slope)).fold(f64::INFINITY, f64::min);
    Ok(LojasiewiczFit { theta: 1.0 - slope, c: intercept.exp(), c_lower, r2, samples: pairs.len() })
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub direction: Vec<f64>,
    pub endpoint: Option<Representation>,
    pub distance: Option<f64>,
    /// Polygonal length of the flow line from the critical point.
    pub arc_length: Option<f64>,
    pub time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct BoundednessReport {
    pub seeds: Vec<SeedOutcome>,
    pub max_distance: Option<f64>,
    pub max_arc_length: Option<f64>,
    pub fit: Option<LojasiewiczFit>,
    /// `ε^θ / (C θ)` with the fitted exponent and lower constant.
    pub bound: Option<f64>,
    pub bounded: bool,
}

pub const SEED_RADIUS: f64 = 1e-4;

/// Flow `seeds` points `x + δ₀ e` (unit `e` in the fiber) down to
/// `f(x) − ε` and compare the spread of the endpoints with the Lojasiewicz
/// length bound fitted on the same flow lines.
pub fn unstable_boundedness_check(
    flow: &GradientFlow,
    rec: &CriticalRecord,
    fiber: &SliceFiber,
    eps: f64,
    seeds: usize,
    delta0: f64,
) -> BoundednessReport {
    if fiber.dim == 0 {
        return BoundednessReport {
            seeds: Vec::new(),
            max_distance: None,
            max_arc_length: None,
            fit: None,
            bound: None,
            bounded: true,
        };
    }
    let level = rec.f_crit - eps;
    let runs: Vec<(SeedOutcome, Option<FlowTrace>)> = sampling::sphere_directions(fiber.dim, seeds)
        .into_par_iter()
        .map(|dir| {
            let seed = rec.x.axpy(delta0, &fiber.vector(&flow.space, &dir));
            let trace = flow.integrate_to_level(&seed, Direction::Forward, level);
            if trace.status != TraceStatus::ExitedLevel {
                let error = Some(format!("seed did not reach level {level}: {}", trace.status.as_str()));
                let outcome =
                    SeedOutcome { direction: dir, endpoint: None, distance: None, arc_length: None, time: None, error };
                return (outcome, None);
            }
            let arc = delta0
                + trace.samples.windows(2).map(|w| w[1].x.distance(&w[0].x)).sum::<f64>();
            let end = trace.last().x.clone();
            let outcome = SeedOutcome {
                direction: dir,
                distance: Some(end.distance(&rec.x)),
                arc_length: Some(arc),
                time: Some(trace.duration()),
                endpoint: Some(end),
                error: None,
            };
            (outcome, Some(trace))
        })
        .collect();
    let traces: Vec<FlowTrace> = runs.iter().filter_map(|r| r.1.clone()).collect();
    let seeds: Vec<SeedOutcome> = runs.into_iter().map(|r| r.0).collect();
    let max_of = |get: fn(&SeedOutcome) -> Option<f64>| seeds.iter().filter_map(get).reduce(f64::max);
    let max_distance = max_of(|s| s.distance);
    let max_arc_length = max_of(|s| s.arc_length);
    let fit = fit_pairs(&usable_pairs(&traces, rec.f_crit, TailSelection::All)).ok();
    let bound = fit.as_ref().map(|l| eps.powf(l.theta) / (l.c_lower * l.theta));
    let all_reached = seeds.iter().all(|s| s.error.is_none());
    let bounded = all_reached
        && matches!((max_arc_length, bound), (Some(len), Some(b)) if len <= b);
    BoundednessReport { seeds, max_distance, max_arc_length, fit, bound, bounded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Sample;
    use crate::quiver::{DimensionVector, Quiver};

    fn a2(dims: [usize; 2]) -> RepSpace {
        RepSpace::new(Quiver::a2(), DimensionVector::new(dims.to_vec())).unwrap()
    }

    fn alpha_a2() -> CentralShift {
        CentralShift(vec![-1.0, 1.0])
    }

    fn scalar(z: C64) -> Representation {
        Representation { blocks: vec![CMat::from_element(1, 1, z)] }
    }

    #[test]
    fn exact_critical_point_is_unchanged() {
        let space = a2([1, 1]);
        let rec = refine_critical(&space, &alpha_a2(), &space.zero(), &RefineOptions::default()).unwrap();
        assert_eq!(rec.x, space.zero());
        assert_eq!(rec.grad_residual, 0.0);
        assert_eq!(rec.f_crit, 2.0);
    }

    #[test]
    fn refine_to_minimum_circle() {
        let space = a2([1, 1]);
        let x = scalar(C64::from_polar((2.0f64 + 1e-4).sqrt(), 0.3));
        let rec = refine_critical(&space, &alpha_a2(), &x, &RefineOptions::default()).unwrap();
        assert!((rec.x.norm_sqr() - 2.0).abs() < 1e-10);
        assert!(rec.f_crit < 1e-20);
        assert!(rec.beta.norm() < 1e-10);
        assert!(rec.criticality_residual(&space) < 1e-9);
    }

    #[test]
    fn refine_reports_failure() {
        let space = a2([1, 1]);
        let opts = RefineOptions { max_iter: 0, flow_time: 1e-3, ..Default::default() };
        match refine_critical(&space, &alpha_a2(), &scalar(C64::new(0.7, 0.0)), &opts) {
            Err(Error::RefinementFailed { best_residual, .. }) => assert!(best_residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weights_at_a2_origin() {
        let space = a2([1, 1]);
        let rec = CriticalRecord::assemble(&space, &alpha_a2(), space.zero());
        let wd = weight_decomposition(&space, &rec);
        assert_eq!(wd.edge_weights[0][(0, 0)], -2.0);
        assert_eq!(wd.partitions()[0].negative, vec![(0, 0)]);
        let fiber = negative_slice(&space, &rec, &wd, 1e-8);
        assert_eq!(fiber.dim, 2);
        let idx = morse_index_check(&space, &rec, &fiber, &alpha_a2());
        assert_eq!((idx.slice_dim, idx.hessian_index, idx.agree), (2, 2, true));
        assert_eq!(idx.status, IndexStatus::Determinate);
    }

    #[test]
    fn zero_beta_has_no_negative_weights() {
        let space = a2([1, 1]);
        let x = scalar(C64::new(2f64.sqrt(), 0.0));
        let rec = CriticalRecord::assemble(&space, &alpha_a2(), x);
        let wd = weight_decomposition(&space, &rec);
        assert!(wd.edge_weights[0].iter().all(|w| w.abs() < 1e-12));
        let fiber = negative_slice(&space, &rec, &wd, 1e-8);
        assert_eq!(fiber.dim, 0);
        let idx = morse_index_check(&space, &rec, &fiber, &alpha_a2());
        assert_eq!((idx.slice_dim, idx.hessian_index, idx.agree), (0, 0, true));
    }

    #[test]
    fn jordan_weights_by_hand() {
        let space = RepSpace::new(Quiver::jordan(1), DimensionVector::new(vec![2])).unwrap();
        let beta = HermitianCollection {
            blocks: vec![CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]))],
        };
        let rec = CriticalRecord {
            x: space.zero(),
            f_crit: 1.0,
            beta_spectra: beta.spectra(),
            beta,
            grad_residual: 0.0,
        };
        let wd = weight_decomposition(&space, &rec);
        // ascending frame (0, 1): w_pq = λ_p − λ_q
        let w = &wd.edge_weights[0];
        assert_eq!((w[(0, 0)], w[(0, 1)], w[(1, 0)], w[(1, 1)]), (0.0, -1.0, 1.0, 0.0));
        let part = &wd.partitions()[0];
        assert_eq!(part.negative, vec![(0, 1)]);
        assert_eq!(part.positive, vec![(1, 0)]);
        assert_eq!(part.zero.len(), 2);
    }

    #[test]
    fn jordan_rank_one_is_constant_f() {
        let space = RepSpace::new(Quiver::jordan(1), DimensionVector::new(vec![1])).unwrap();
        let alpha = CentralShift(vec![0.7]);
        let rec = CriticalRecord::assemble(&space, &alpha, scalar(C64::new(0.4, -0.2)));
        assert_eq!(rec.grad_residual, 0.0);
        let wd = weight_decomposition(&space, &rec);
        let fiber = negative_slice(&space, &rec, &wd, 1e-8);
        let idx = morse_index_check(&space, &rec, &fiber, &alpha);
        assert_eq!((idx.slice_dim, idx.hessian_index, idx.agree), (0, 0, true));
    }

    #[test]
    fn slice_cuts_out_orbit_directions() {
        let space = a2([2, 2]);
        let mut x = space.zero();
        x.blocks[0][(0, 0)] = C64::new(2f64.sqrt(), 0.0);
        let rec = CriticalRecord::assemble(&space, &alpha_a2(), x);
        assert!(rec.grad_residual < 1e-14);
        assert!((rec.f_crit - 2.0).abs() < 1e-14);
        let wd = weight_decomposition(&space, &rec);
        assert!(wd.nonzero_weight_mass(&space, &rec.x) < 1e-12);
        let part = &wd.partitions()[0];
        assert_eq!(part.negative.len(), 3);
        let fiber = negative_slice(&space, &rec, &wd, 1e-8);
        assert_eq!(fiber.dim, 2);
        assert!(fiber.orthonormality_defect() < 1e-12);
        assert!(orbit_overlap(&space, &rec, &fiber) < 1e-10);
        for e in &fiber.basis {
            assert!((negative_weight_fraction(&space, &wd, e) - 1.0).abs() < 1e-12);
            let v = space.unflatten(e);
            // only the (2,2) entry of the block
            assert!(v.blocks[0][(1, 1)].norm() > 1.0 - 1e-12);
        }
        let idx = morse_index_check(&space, &rec, &fiber, &alpha_a2());
        assert!(idx.agree, "{idx:?}");
    }

    fn synthetic_trace(theta: f64, f_crit: f64) -> FlowTrace {
        let space = a2([1, 1]);
        let samples = (0..40)
            .map(|k| {
                let df = (-(k as f64) / 2.0).exp();
                Sample {
                    t: k as f64,
                    x: space.zero(),
                    velocity: space.zero(),
                    f: f_crit + df,
                    gradnorm: 3.0 * df.powf(1.0 - theta),
                    monitors: Vec::new(),
                }
            })
            .collect();
        FlowTrace { direction: Direction::Forward, samples, status: TraceStatus::Converged, monitor_names: Vec::new() }
    }

    #[test]
    fn lojasiewicz_synthetic_half() {
        let fit = lojasiewicz_fit_with(&synthetic_trace(0.5, 1.0), 1.0, TailSelection::All).unwrap();
        assert!((fit.theta - 0.5).abs() < 1e-3);
        assert!((fit.c - 3.0).abs() < 1e-6);
        assert!(fit.r2 > 0.999_999);
    }

    #[test]
    fn lojasiewicz_needs_enough_samples() {
        let mut trace = synthetic_trace(0.5, 0.0);
        trace.samples.truncate(5);
        assert!(matches!(lojasiewicz_fit(&trace, 0.0), Err(Error::InsufficientData { .. })));
    }

    fn dense_flow(space: RepSpace, alpha: CentralShift, max_time: f64) -> GradientFlow {
        let cfg = IntegratorConfig { max_step: 0.05, max_time, ..Default::default() };
        GradientFlow::new(space, alpha, cfg)
    }

    #[test]
    fn lojasiewicz_quadratic_minimum() {
        let flow = dense_flow(a2([1, 1]), alpha_a2(), 50.0);
        let trace = flow.integrate(&scalar(C64::new(1.0, 0.0)));
        let fit = lojasiewicz_fit(&trace, 0.0).unwrap();
        assert!((fit.theta - 0.5).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn lojasiewicz_quartic_minimum() {
        let cfg = IntegratorConfig { max_time: 1e4, ..Default::default() };
        let flow = GradientFlow::new(a2([1, 1]), CentralShift(vec![0.0, 0.0]), cfg);
        let trace = flow.integrate(&scalar(C64::new(1.0, 0.0)));
        let fit = lojasiewicz_fit(&trace, 0.0).unwrap();
        assert!((fit.theta - 0.25).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn unstable_set_of_a2_origin_is_bounded() {
        let space = a2([1, 1]);
        let flow = GradientFlow::new(space.clone(), alpha_a2(), IntegratorConfig::default());
        let rec = CriticalRecord::assemble(&space, &alpha_a2(), space.zero());
        let wd = weight_decomposition(&space, &rec);
        let fiber = negative_slice(&space, &rec, &wd, 1e-8);
        let r8 = unstable_boundedness_check(&flow, &rec, &fiber, 1.0, 8, SEED_RADIUS);
        let r16 = unstable_boundedness_check(&flow, &rec, &fiber, 1.0, 16, SEED_RADIUS);
        // level 1 is the circle s = 2 − √2
        let radius = (2.0 - 2f64.sqrt()).sqrt();
        let d8 = r8.max_distance.unwrap();
        assert!((d8 - radius).abs() < 1e-7, "{d8}");
        assert!((d8 - r16.max_distance.unwrap()).abs() < 1e-6);
        assert!(r8.bounded, "{:?} vs {:?}", r8.max_arc_length, r8.bound);
        let fit = r8.fit.unwrap();
        assert!((fit.theta - 0.5).abs() < 0.05);
    }

    #[test]
    fn empty_fiber_is_vacuously_bounded() {
        let space = a2([1, 1]);
        let flow = GradientFlow::new(space.clone(), alpha_a2(), IntegratorConfig::default());
        let rec = CriticalRecord::assemble(&space, &alpha_a2(), scalar(C64::new(2f64.sqrt(), 0.0)));
        let fiber = SliceFiber { basis: Vec::new(), dim: 0 };
        let r = unstable_boundedness_check(&flow, &rec, &fiber, 0.5, 8, SEED_RADIUS);
        assert!(r.bounded && r.seeds.is_empty());
    }
}
