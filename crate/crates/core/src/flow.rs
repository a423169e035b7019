//! Integration of the gradient flow `ẋ = −ρ_x(μ(x) − α)`, level-crossing
//! times `τ_ℓ`, level-set maps, the energy identity and invariant monitors.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::moment::{self, CentralShift};
use crate::ode::{self, StepController};
use crate::quiver::{CycleWord, Relation, RepSpace, Representation};

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_time: f64,
    /// Convergence threshold on `‖grad f‖`.
    pub grad_stop: f64,
    /// Accepted steps the gradient must stay below `grad_stop`.
    pub stall_window: usize,
    pub max_steps: usize,
    /// State norm above `blow_up_factor · (1 + ‖x0‖)` ends the run.
    pub blow_up_factor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 10.0,
            min_step: 1e-12,
            max_time: 1e3,
            grad_stop: 1e-8,
            stall_window: 5,
            max_steps: 500_000,
            blow_up_factor: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("min_step", self.min_step),
            ("max_time", self.max_time),
            ("grad_stop", self.grad_stop),
            ("blow_up_factor", self.blow_up_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.min_step >= self.max_step {
            return Err(Error::InvalidConfig("min_step must be below max_step".into()));
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidConfig("stall_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceStatus {
    Converged,
    ExitedLevel,
    StepLimit,
    BlowUp,
}

impl TraceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceStatus::Converged => "converged",
            TraceStatus::ExitedLevel => "exited_level",
            TraceStatus::StepLimit => "step_limit",
            TraceStatus::BlowUp => "blow_up",
        }
    }
}

/// Cycle traces and relation residuals recorded at every sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Monitors {
    pub cycles: Vec<CycleWord>,
    pub relations: Vec<Relation>,
}

impl Monitors {
    /// Column names in registration order: each cycle contributes a real and
    /// an imaginary column, each relation one residual column.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for w in &self.cycles {
            out.push(format!("tr_{}_re", w.name));
            out.push(format!("tr_{}_im", w.name));
        }
        for r in &self.relations {
            out.push(format!("res_{}", r.name));
        }
        out
    }

    pub fn evaluate(&self, space: &RepSpace, x: &Representation) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.cycles.len() + self.relations.len());
        for w in &self.cycles {
            let z = space.cycle_trace(x, w).unwrap_or(C64::new(f64::NAN, f64::NAN));
            out.push(z.re);
            out.push(z.im);
        }
        for r in &self.relations {
            out.push(space.relation_residual(x, r));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// Elapsed time, nonnegative and increasing in both directions.
    pub t: f64,
    pub x: Representation,
    /// `dx/dt` with respect to the elapsed time.
    pub velocity: Representation,
    pub f: f64,
    pub gradnorm: f64,
    pub monitors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub direction: Direction,
    pub samples: Vec<Sample>,
    pub status: TraceStatus,
    pub monitor_names: Vec<String>,
}

impl FlowTrace {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trace has at least one sample")
    }

    pub fn duration(&self) -> f64 {
        self.last().t
    }

    /// Largest increase of `f` between consecutive forward samples.
    pub fn max_f_increase(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].f - w[0].f).max(0.0)).fold(0.0, f64::max)
    }

    /// Largest `|m_k(t) − m_k(0)|` for monitor column `k`.
    pub fn monitor_drift(&self, k: usize) -> f64 {
        let m0 = self.samples[0].monitors[k];
        self.samples.iter().map(|s| (s.monitors[k] - m0).abs()).fold(0.0, f64::max)
    }

    /// Cubic Hermite interpolation of the state at elapsed time `t`.
    pub fn state_at(&self, t: f64) -> Option<Representation> {
        let s = &self.samples;
        if t < s[0].t || t > self.last().t {
            return None;
        }
        let k = s.partition_point(|p| p.t <= t).saturating_sub(1).min(s.len().saturating_sub(2));
        if s.len() == 1 {
            return Some(s[0].x.clone());
        }
        let (a, b) = (&s[k], &s[k + 1]);
        let h = b.t - a.t;
        let u = (t - a.t) / h;
        let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
        let h10 = u.powi(3) - 2.0 * u * u + u;
        let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
        let h11 = u.powi(3) - u * u;
        Some(a.x.scale(h00).axpy(h10 * h, &a.velocity).axpy(h01, &b.x).axpy(h11 * h, &b.velocity))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Stop {
    None,
    Level(f64),
}

/// Where a level-set map landed.
#[derive(Clone, Debug)]
pub enum LevelMapKind {
    /// The flow crossed the target level at a finite time.
    Crossed { time: f64 },
    /// The flow converged onto a critical point at the target level.
    Limit,
}

#[derive(Clone, Debug)]
pub struct LevelMap {
    pub point: Representation,
    pub kind: LevelMapKind,
}

#[derive(Clone, Debug)]
pub enum ProbeOutcome {
    /// The flow reached the window boundary level at the given elapsed time.
    Exits { time: f64, point: Representation },
    /// The flow converged inside the open window.
    ConvergesInterior { limit: Representation, f_limit: f64 },
    /// No classification within the configured limits.
    Inconclusive { status: TraceStatus },
}

#[derive(Clone, Debug)]
pub struct Condition2Report {
    /// Forward flow: exits below `a` or converges inside `(a, b)`.
    pub forward: ProbeOutcome,
    /// Backward flow: exits above `b` or converges inside `(a, b)`.
    pub backward: ProbeOutcome,
}

/// The gradient-flow problem on one representation space.
#[derive(Clone, Debug)]
pub struct GradientFlow {
    pub space: RepSpace,
    pub alpha: CentralShift,
    pub monitors: Monitors,
    pub cfg: IntegratorConfig,
}

impl GradientFlow {
    pub fn new(space: RepSpace, alpha: CentralShift, cfg: IntegratorConfig) -> Self {
        Self { space, alpha, monitors: Monitors::default(), cfg }
    }

    pub fn with_monitors(mut self, monitors: Monitors) -> Self {
        self.monitors = monitors;
        self
    }

    pub fn f(&self, x: &Representation) -> f64 {
        moment::f_value(&self.space, x, &self.alpha)
    }

    pub fn gradnorm(&self, x: &Representation) -> f64 {
        moment::gradient_norm(&self.space, x, &self.alpha)
    }

    fn rhs(&self, sign: f64) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |y: &[f64]| {
            let x = self.space.unflatten(y);
            let v = moment::flow_velocity(&self.space, &x, &self.alpha);
            let mut out = self.space.flatten(&v);
            if sign < 0.0 {
                out.iter_mut().for_each(|c| *c = -*c);
            }
            out
        }
    }

    fn sample(&self, t: f64, y: &[f64], dy: &[f64]) -> Sample {
        let x = self.space.unflatten(y);
        let velocity = self.space.unflatten(dy);
        Sample {
            t,
            f: self.f(&x),
            gradnorm: self.gradnorm(&x),
            monitors: self.monitors.evaluate(&self.space, &x),
            x,
            velocity,
        }
    }

    /// Forward integration until convergence, the time cap, or blow-up.
    pub fn integrate(&self, x0: &Representation) -> FlowTrace {
        self.run(x0, Direction::Forward, Stop::None)
    }

    pub fn integrate_dir(&self, x0: &Representation, dir: Direction) -> FlowTrace {
        self.run(x0, dir, Stop::None)
    }

    /// Integrate in `dir` until `f` crosses `level` (or another stop reason).
    pub fn integrate_to_level(&self, x0: &Representation, dir: Direction, level: f64) -> FlowTrace {
        self.run(x0, dir, Stop::Level(level))
    }

    /// One integrator step of exactly `tau` (no error control). Accurate for
    /// steps no longer than accepted ones.
    pub fn step_from(&self, x: &Representation, dir: Direction, tau: f64) -> Representation {
        let rhs = self.rhs(dir.sign());
        let y = self.space.flatten(x);
        let k = rhs(&y);
        self.space.unflatten(&ode::dopri_step(&rhs, &y, &k, tau).y)
    }

    /// Flow for a fixed elapsed time, with error control.
    pub fn advance(&self, x: &Representation, dir: Direction, duration: f64) -> Result<Representation> {
        if duration <= 0.0 {
            return Ok(x.clone());
        }
        let rhs = self.rhs(dir.sign());
        let mut y = self.space.flatten(x);
        let mut k = rhs(&y);
        let mut h = ode::initial_step(&rhs, &y, &k, self.cfg.abs_tol, self.cfg.rel_tol, self.cfg.max_step);
        let mut ctl = StepController::default();
        let mut t = 0.0;
        let mut steps = 0;
        while t < duration {
            steps += 1;
            if steps > self.cfg.max_steps {
                return Err(Error::Precondition("advance exceeded max_steps".into()));
            }
            h = h.min(duration - t).min(self.cfg.max_step);
            let s = ode::dopri_step(&rhs, &y, &k, h);
            let e = ode::error_norm(&s, &y, self.cfg.abs_tol, self.cfg.rel_tol);
            if e.is_finite() && e <= 1.0 {
                t += h;
                y = s.y;
                k = s.dy;
                h *= ctl.accept(e);
            } else {
                h *= if e.is_finite() { ctl.reject(e) } else { 0.1 };
                if h < self.cfg.min_step {
                    return Err(Error::Precondition("advance: step size underflow".into()));
                }
            }
        }
        Ok(self.space.unflatten(&y))
    }

    fn run(&self, x0: &Representation, dir: Direction, stop: Stop) -> FlowTrace {
        let cfg = &self.cfg;
        let sign = dir.sign();
        let rhs = self.rhs(sign);
        let mut y = self.space.flatten(x0);
        let mut k = rhs(&y);
        let blow_bound = cfg.blow_up_factor * (1.0 + x0.norm());
        let mut samples = vec![self.sample(0.0, &y, &k)];
        let finish = |samples: Vec<Sample>, status| FlowTrace {
            direction: dir,
            samples,
            status,
            monitor_names: self.monitors.names(),
        };
        if samples[0].gradnorm < cfg.grad_stop {
            return finish(samples, TraceStatus::Converged);
        }
        let mut h = ode::initial_step(&rhs, &y, &k, cfg.abs_tol, cfg.rel_tol, cfg.max_step);
        let mut ctl = StepController::default();
        let mut t = 0.0;
        let mut below = 0usize;
        let mut steps = 0usize;
        loop {
            if t >= cfg.max_time || steps >= cfg.max_steps {
                return finish(samples, TraceStatus::StepLimit);
            }
            steps += 1;
            h = h.min(cfg.max_step);
            let s = ode::dopri_step(&rhs, &y, &k, h);
            let e = ode::error_norm(&s, &y, cfg.abs_tol, cfg.rel_tol);
            if !e.is_finite() || !(e <= 1.0) {
                h *= if e.is_finite() { ctl.reject(e) } else { 0.1 };
                if h < cfg.min_step {
                    return finish(samples, TraceStatus::BlowUp);
                }
                continue;
            }
            let f_old = samples.last().unwrap().f;
            let candidate = self.sample(t + h, &s.y, &s.dy);
            if let Stop::Level(level) = stop {
                let crossed = match dir {
                    Direction::Forward => candidate.f <= level,
                    Direction::Backward => candidate.f >= level,
                };
                if crossed {
                    let tau = self.locate_level(&rhs, &y, &k, h, f_old, candidate.f, level);
                    let hit = ode::dopri_step(&rhs, &y, &k, tau);
                    samples.push(self.sample(t + tau, &hit.y, &hit.dy));
                    return finish(samples, TraceStatus::ExitedLevel);
                }
            }
            let gradnorm = candidate.gradnorm;
            let state_norm = candidate.x.norm();
            samples.push(candidate);
            t += h;
            y = s.y;
            k = s.dy;
            if !(state_norm <= blow_bound) {
                return finish(samples, TraceStatus::BlowUp);
            }
            if gradnorm < cfg.grad_stop {
                below += 1;
                if below >= cfg.stall_window {
                    return finish(samples, TraceStatus::Converged);
                }
            } else {
                below = 0;
            }
            h *= ctl.accept(e);
        }
    }

    /// Root of `τ ↦ f(step(y, τ)) − level` on `(0, h]` by Illinois regula falsi.
    #[allow(clippy::too_many_arguments)]
    fn locate_level<F: Fn(&[f64]) -> Vec<f64>>(
        &self,
        rhs: &F,
        y: &[f64],
        k: &[f64],
        h: f64,
        f0: f64,
        f1: f64,
        level: f64,
    ) -> f64 {
        let eval = |tau: f64| -> f64 {
            let s = ode::dopri_step(rhs, y, k, tau);
            self.f(&self.space.unflatten(&s.y)) - level
        };
        let tol = 1e-13 * (1.0 + level.abs());
        let (mut a, mut fa) = (0.0, f0 - level);
        let (mut b, mut fb) = (h, f1 - level);
        if fb.abs() <= tol {
            return b;
        }
        let mut side = 0i32;
        for _ in 0..200 {
            let c = if (fa - fb).abs() > 0.0 { (a * fb - b * fa) / (fb - fa) } else { 0.5 * (a + b) };
            let c = if c <= a.min(b) || c >= a.max(b) { 0.5 * (a + b) } else { c };
            let fc = eval(c);
            if fc.abs() <= tol || (b - a).abs() < 1e-15 * h {
                return c;
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        b
    }

    /// `τ_ℓ(x)`: the signed flow time at which `f` reaches `level`, and the
    /// point reached. Levels above `f(x)` are reached by backward flow and give
    /// a negative time.
    pub fn tau_level(&self, x: &Representation, level: f64) -> Result<(f64, Representation)> {
        let f0 = self.f(x);
        if level == f0 {
            return Ok((0.0, x.clone()));
        }
        let dir = if level < f0 { Direction::Forward } else { Direction::Backward };
        let trace = self.integrate_to_level(x, dir, level);
        let last = trace.last();
        match trace.status {
            TraceStatus::ExitedLevel => Ok((dir.sign() * last.t, last.x.clone())),
            TraceStatus::Converged => Err(Error::LevelNotReached { level, critical_value: last.f }),
            TraceStatus::StepLimit => Err(Error::LevelNotReachedOther {
                level,
                reason: format!("time or step limit at t = {} with f = {}", last.t, last.f),
            }),
            TraceStatus::BlowUp => Err(Error::LevelNotReachedOther {
                level,
                reason: format!("blow-up at t = {} with f = {}", last.t, last.f),
            }),
        }
    }

    /// `φ_{ℓ₁,ℓ₂}(x) = φ(x, τ_{ℓ₂}(x))` with `ℓ₁ = f(x)`. When `ℓ₂` is the value
    /// of the critical point the flow converges to, the limit is returned.
    pub fn level_set_map(&self, x: &Representation, level: f64) -> Result<LevelMap> {
        match self.tau_level(x, level) {
            Ok((time, point)) => Ok(LevelMap { point, kind: LevelMapKind::Crossed { time } }),
            Err(Error::LevelNotReached { critical_value, .. })
                if (critical_value - level).abs() <= 1e-6 * (1.0 + level.abs()) =>
            {
                let dir = if level < self.f(x) { Direction::Forward } else { Direction::Backward };
                let trace = self.integrate_dir(x, dir);
                Ok(LevelMap { point: trace.last().x.clone(), kind: LevelMapKind::Limit })
            }
            Err(e) => Err(e),
        }
    }

    /// Classify the forward and backward flow of `x` relative to `(a, b)`.
    pub fn condition2_probe(&self, x: &Representation, a: f64, b: f64) -> Result<Condition2Report> {
        let fx = self.f(x);
        if !(a < fx && fx < b) {
            return Err(Error::Precondition(format!("need a < f(x) < b, got {a} < {fx} < {b}")));
        }
        let classify = |dir: Direction, level: f64| -> ProbeOutcome {
            let trace = self.integrate_to_level(x, dir, level);
            let last = trace.last();
            match trace.status {
                TraceStatus::ExitedLevel => ProbeOutcome::Exits { time: last.t, point: last.x.clone() },
                TraceStatus::Converged if a < last.f && last.f < b => {
                    ProbeOutcome::ConvergesInterior { limit: last.x.clone(), f_limit: last.f }
                }
                status => ProbeOutcome::Inconclusive { status },
            }
        };
        Ok(Condition2Report {
            forward: classify(Direction::Forward, a),
            backward: classify(Direction::Backward, b),
        })
    }
}

/// `|f(start) − f(end) − 2 ∫ ‖ẋ‖² dt|`: the velocity integral uses three-point
/// Gauss–Legendre on every accepted step, with nodes reached by a single
/// integrator step from the left sample.
pub fn energy_identity_defect(flow: &GradientFlow, trace: &FlowTrace) -> f64 {
    if trace.samples.len() < 2 {
        return 0.0;
    }
    let r = (0.15f64).sqrt();
    let nodes = [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)];
    let mut integral = 0.0;
    for w in trace.samples.windows(2) {
        let h = w[1].t - w[0].t;
        for (c, wt) in nodes {
            let xn = flow.step_from(&w[0].x, trace.direction, c * h);
            let v = moment::flow_velocity(&flow.space, &xn, &flow.alpha);
            integral += wt * h * v.norm_sqr();
        }
    }
    let df = trace.first().f - trace.last().f;
    let signed = match trace.direction {
        Direction::Forward => df,
        Direction::Backward => -df,
    };
    (signed - 2.0 * integral).abs()
}

/// Largest deviation between `map` of the first trace and the second, taken
/// at the sample times of the first inside the common time range.
pub fn trace_distance(a: &FlowTrace, b: &FlowTrace, map: impl Fn(&Representation) -> Representation) -> f64 {
    let mut worst: f64 = 0.0;
    for s in a.samples.iter().filter(|s| s.t <= b.duration()) {
        if let Some(y) = b.state_at(s.t) {
            worst = worst.max(map(&s.x).distance(&y));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::quiver::{DimensionVector, GroupElement, Quiver};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn a2_flow(alpha: [f64; 2]) -> GradientFlow {
        let space = RepSpace::new(Quiver::a2(), DimensionVector::new(vec![1, 1])).unwrap();
        GradientFlow::new(space, CentralShift(alpha.to_vec()), IntegratorConfig::default())
    }

    fn scalar(z: C64) -> Representation {
        Representation { blocks: vec![CMat::from_element(1, 1, z)] }
    }

    /// `s = |x|²` under `ṡ = −2s(s − 2)`: logistic with rate 4 and capacity 2.
    fn s_closed_form(s0: f64, t: f64) -> f64 {
        2.0 / (1.0 + (2.0 / s0 - 1.0) * (-4.0 * t).exp())
    }

    /// Time for `s` to go from `s0` to `s1` along the same logistic.
    fn logistic_time(s0: f64, s1: f64) -> f64 {
        ((s1 * (2.0 - s0)) / (s0 * (2.0 - s1))).ln() / 4.0
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let bad = IntegratorConfig { min_step: 20.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig { rel_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn critical_start_gives_single_sample() {
        let flow = a2_flow([-1.0, 1.0]);
        let trace = flow.integrate(&flow.space.zero());
        assert_eq!(trace.samples.len(), 1);
        assert_eq!(trace.status, TraceStatus::Converged);
    }

    #[test]
    fn a2_flow_matches_logistic() {
        let flow = a2_flow([-1.0, 1.0]);
        let trace = flow.integrate(&scalar(C64::new(1.0, 0.0)));
        assert_eq!(trace.status, TraceStatus::Converged);
        for s in trace.samples.iter().step_by(7) {
            let sx = s.x.norm_sqr();
            assert!((sx - s_closed_form(1.0, s.t)).abs() < 1e-8, "t={} s={sx}", s.t);
        }
        assert!((trace.last().x.norm_sqr() - 2.0).abs() < 1e-8);
        assert!(trace.last().f < 1e-15);
        assert!(trace.max_f_increase() <= 1e-10);
    }

    #[test]
    fn tau_level_matches_closed_form() {
        let flow = a2_flow([-1.0, 1.0]);
        let x = scalar(C64::new(1.0, 0.0));
        assert!((flow.f(&x) - 0.5).abs() < 1e-15);
        let (t, y) = flow.tau_level(&x, 0.25).unwrap();
        assert!((flow.f(&y) - 0.25).abs() < 1e-8 * 1.25);
        // f = (s − 2)²/2 = 0.25 with s < 2 gives s = 2 − 1/√2
        let s1 = 2.0 - 0.5f64.sqrt();
        assert!((t - logistic_time(1.0, s1)).abs() < 1e-8);

        let (t0, y0) = flow.tau_level(&x, 0.5).unwrap();
        assert_eq!(t0, 0.0);
        assert_eq!(y0, x);
    }

    #[test]
    fn tau_level_not_reached_from_critical_point() {
        let flow = a2_flow([-1.0, 1.0]);
        match flow.tau_level(&flow.space.zero(), 1.0) {
            Err(Error::LevelNotReached { critical_value, .. }) => assert!((critical_value - 2.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backward_tau_level_is_negative() {
        let flow = a2_flow([-1.0, 1.0]);
        let x = scalar(C64::new(1.0, 0.0));
        let (t, y) = flow.tau_level(&x, 1.5).unwrap();
        assert!(t < 0.0);
        assert!((flow.f(&y) - 1.5).abs() < 1e-8 * 2.5);
    }

    #[test]
    fn level_set_maps_compose() {
        let flow = a2_flow([-1.0, 1.0]);
        let x = scalar(C64::new(0.8, 0.5));
        let l1 = flow.f(&x);
        let same = flow.level_set_map(&x, l1).unwrap();
        assert_eq!(same.point, x);
        let mid = flow.level_set_map(&x, 0.6 * l1).unwrap().point;
        let two = flow.level_set_map(&mid, 0.2 * l1).unwrap().point;
        let direct = flow.level_set_map(&x, 0.2 * l1).unwrap().point;
        assert!(two.distance(&direct) < 1e-7);
    }

    #[test]
    fn level_set_map_to_minimum_preserves_phase() {
        let flow = a2_flow([-1.0, 1.0]);
        let z = C64::from_polar(1.0, 0.7);
        let x = scalar(z);
        let m = flow.level_set_map(&x, 0.0).unwrap();
        assert!(matches!(m.kind, LevelMapKind::Limit));
        let w = m.point.blocks[0][(0, 0)];
        assert!((w.norm_sqr() - 2.0).abs() < 1e-8);
        assert!((w.arg() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn energy_identity_on_a2() {
        let flow = a2_flow([-1.0, 1.0]);
        let x = scalar(C64::new(0.3, 0.2));
        let trace = flow.integrate(&x);
        let d = energy_identity_defect(&flow, &trace);
        assert!(d < 1e-6 * (1.0 + trace.first().f), "defect {d}");
        let single = flow.integrate(&flow.space.zero());
        assert_eq!(energy_identity_defect(&flow, &single), 0.0);
    }

    #[test]
    fn condition2_generic_point() {
        let flow = a2_flow([-1.0, 1.0]);
        // f = 1 at s = 2 − √2
        let x = scalar(C64::new((2.0 - 2f64.sqrt()).sqrt(), 0.0));
        assert!((flow.f(&x) - 1.0).abs() < 1e-12);
        let r = flow.condition2_probe(&x, 0.5, 1.5).unwrap();
        assert!(matches!(r.forward, ProbeOutcome::Exits { .. }));
        assert!(matches!(r.backward, ProbeOutcome::Exits { .. }));
    }

    #[test]
    fn condition2_near_source() {
        let flow = a2_flow([-1.0, 1.0]);
        let x = scalar(C64::new(1e-6, 0.0));
        let r = flow.condition2_probe(&x, 0.5, 3.0).unwrap();
        assert!(matches!(r.forward, ProbeOutcome::Exits { .. }));
        match r.backward {
            ProbeOutcome::ConvergesInterior { limit, f_limit } => {
                assert!(limit.norm() < 1e-8);
                assert!((f_limit - 2.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn condition2_at_critical_point() {
        let flow = a2_flow([-1.0, 1.0]);
        let r = flow.condition2_probe(&flow.space.zero(), 1.0, 3.0).unwrap();
        assert!(matches!(r.forward, ProbeOutcome::ConvergesInterior { .. }));
        assert!(matches!(r.backward, ProbeOutcome::ConvergesInterior { .. }));
    }

    #[test]
    fn backward_flow_off_unstable_set_blows_up() {
        let flow = a2_flow([-1.0, 1.0]);
        let trace = flow.integrate_dir(&scalar(C64::new(2.0, 0.0)), Direction::Backward);
        assert_eq!(trace.status, TraceStatus::BlowUp);
    }

    #[test]
    fn flow_is_unitarily_equivariant() {
        let space = RepSpace::new(Quiver::jordan(2), DimensionVector::new(vec![2])).unwrap();
        let flow = GradientFlow::new(space.clone(), CentralShift(vec![0.5]), IntegratorConfig {
            max_time: 20.0,
            ..Default::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x0 = space.random(&mut rng, 1.0);
        let k = GroupElement::random_unitary(space.dims(), &mut rng);
        let a = flow.integrate(&x0);
        let b = flow.integrate(&space.act(&k, &x0).unwrap());
        let d = trace_distance(&a, &b, |x| space.act(&k, x).unwrap());
        assert!(d < 1e-8, "distance {d}");
    }

    #[test]
    fn cycle_traces_are_conserved() {
        let q = Quiver::jordan(2);
        let space = RepSpace::new(q.clone(), DimensionVector::new(vec![2])).unwrap();
        let monitors = Monitors {
            cycles: vec![
                CycleWord::new(&q, "x", vec![0]).unwrap(),
                CycleWord::new(&q, "xy", vec![0, 1]).unwrap(),
            ],
            relations: vec![],
        };
        let flow = GradientFlow::new(space.clone(), CentralShift(vec![0.0]), IntegratorConfig {
            max_time: 30.0,
            ..Default::default()
        })
        .with_monitors(monitors);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trace = flow.integrate(&space.random(&mut rng, 1.0));
        assert_eq!(trace.monitor_names.len(), 4);
        for k in 0..4 {
            assert!(trace.monitor_drift(k) < 1e-8);
        }
    }

    #[test]
    fn hermite_state_matches_samples() {
        let flow = a2_flow([-1.0, 1.0]);
        let trace = flow.integrate(&scalar(C64::new(0.5, 0.5)));
        let s = &trace.samples[3];
        assert!(trace.state_at(s.t).unwrap().distance(&s.x) < 1e-14);
        assert!(trace.state_at(-1.0).is_none());
    }
}
