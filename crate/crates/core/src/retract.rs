//! Closed-form planar scenes for the retract construction near a critical
//! level: the smooth saddle `f = ½(y² − x²)` and the slit quotient, the
//! same function on `ℝ_{≥0} × [0, 2π)` with the `ρ = 0` circle collapsed.
//!
//! The critical value is `c = 0`. On the smooth saddle the flow is
//! `φ_t(x, y) = (eᵗx, e⁻ᵗy)`, `W⁻ = {y = 0}`, `W⁺ = {x = 0}`, and the
//! neighbourhoods of `W⁻ ∩ f⁻¹(−ε)` are the tubes `E_s = {|y| < δ(1 − s)}` on
//! the two branches `x = ±√(2ε + y²)`, retracted by `r((b, y), u) = (b, y(1 − u))`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    SmoothSaddle,
    SlitQuotient,
}

impl SceneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::SmoothSaddle => "smooth_saddle",
            SceneKind::SlitQuotient => "slit_quotient",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetractScene {
    pub kind: SceneKind,
    pub eps: f64,
    /// Tube width of the neighbourhood family.
    pub delta: f64,
}

impl RetractScene {
    pub const C: f64 = 0.0;

    pub fn smooth_saddle(eps: f64, delta: f64) -> Self {
        Self { kind: SceneKind::SmoothSaddle, eps, delta }
    }

    pub fn slit_quotient(eps: f64) -> Self {
        Self { kind: SceneKind::SlitQuotient, eps, delta: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidConfig("scene eps and delta must be positive".into()));
        }
        Ok(())
    }

    fn require_saddle(&self) -> Result<()> {
        match self.kind {
            SceneKind::SmoothSaddle => Ok(()),
            SceneKind::SlitQuotient => {
                Err(Error::Precondition("the retract construction is only available on the smooth saddle".into()))
            }
        }
    }
}

impl Default for RetractScene {
    fn default() -> Self {
        Self::smooth_saddle(0.1, 0.5)
    }
}

/// A point of the smooth saddle in Cartesian coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddlePoint {
    pub x: f64,
    pub y: f64,
}

impl SaddlePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn f(&self) -> f64 {
        0.5 * (self.y * self.y - self.x * self.x)
    }

    pub fn flow(&self, t: f64) -> Self {
        Self { x: t.exp() * self.x, y: (-t).exp() * self.y }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_critical(&self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

/// A point of the slit quotient, `θ ∈ [0, 2π)`; every `ρ = 0` point is the same.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlitPoint {
    pub rho: f64,
    pub theta: f64,
}

impl SlitPoint {
    pub fn f(&self) -> f64 {
        let (s, c) = self.theta.sin_cos();
        0.5 * self.rho * self.rho * (s * s - c * c)
    }

    pub fn to_plane(&self) -> SaddlePoint {
        SaddlePoint { x: self.rho * self.theta.cos(), y: self.rho * self.theta.sin() }
    }

    pub fn from_plane(p: SaddlePoint) -> Self {
        let rho = p.x.hypot(p.y);
        let theta = if rho == 0.0 { 0.0 } else { p.y.atan2(p.x).rem_euclid(TAU) };
        Self { rho, theta: if theta >= TAU { 0.0 } else { theta } }
    }

    pub fn flow(&self, t: f64) -> Self {
        Self::from_plane(self.to_plane().flow(t))
    }
}

/// `e^{2t}` where `φ_t(p)` lies on `f = level`, for `p` off the stable axis.
fn flow_factor(p: SaddlePoint, level: f64) -> f64 {
    let x2 = p.x * p.x;
    if x2 == 0.0 {
        return f64::NAN;
    }
    let xy = p.x * p.y;
    (-level + (level * level + xy * xy).sqrt()) / x2
}

/// `τ_ℓ(p)` in closed form (negative when `ℓ > f(p)`).
pub fn saddle_tau(p: SaddlePoint, level: f64) -> Result<f64> {
    if p.x == 0.0 {
        return Err(Error::UndefinedDomain(format!("({}, {}) is on the stable axis", p.x, p.y)));
    }
    let u = flow_factor(p, level);
    if u <= 0.0 {
        return Err(Error::LevelNotReached { level, critical_value: 0.0 });
    }
    Ok(0.5 * u.ln())
}

/// `φ(p, τ_ℓ(p))`. A point of `W⁻` flowed back to level `0` lands on the
/// critical point.
pub fn saddle_to_level(p: SaddlePoint, level: f64) -> Result<SaddlePoint> {
    if p.x == 0.0 {
        return Err(Error::UndefinedDomain(format!("({}, {}) is on the stable axis", p.x, p.y)));
    }
    let u = flow_factor(p, level);
    if u == 0.0 && p.y == 0.0 {
        return Ok(SaddlePoint::new(0.0, 0.0));
    }
    if !(u > 0.0) {
        return Err(Error::LevelNotReached { level, critical_value: 0.0 });
    }
    let r = u.sqrt();
    Ok(SaddlePoint { x: p.x * r, y: p.y / r })
}

impl RetractScene {
    fn check_domain(&self, p: SaddlePoint) -> Result<()> {
        self.require_saddle()?;
        let f = p.f();
        let slack = 1e-12 * (1.0 + self.eps);
        if f < -self.eps - slack || f > self.eps + slack {
            return Err(Error::UndefinedDomain(format!("f = {f} outside [c − ε, c + ε]")));
        }
        if p.x == 0.0 && !p.is_critical() {
            return Err(Error::UndefinedDomain(format!("({}, {}) is on the stable set", p.x, p.y)));
        }
        Ok(())
    }

    /// The point where the flow line of `p` meets `f⁻¹(c − ε)`.
    pub fn level_point(&self, p: SaddlePoint) -> Result<SaddlePoint> {
        self.check_domain(p)?;
        saddle_to_level(p, Self::C - self.eps)
    }

    /// `σ` on `f⁻¹(c − ε)`: `sup{s : q ∈ E_s}`.
    pub fn sigma_on_level(&self, y_level: f64) -> f64 {
        (1.0 - y_level.abs() / self.delta).max(0.0)
    }

    /// Membership of a level point with coordinate `y` in `E_s` and its closure.
    pub fn in_e(&self, y_level: f64, s: f64) -> bool {
        if s >= 1.0 {
            y_level == 0.0
        } else {
            y_level.abs() < self.delta * (1.0 - s)
        }
    }

    pub fn in_e_closure(&self, y_level: f64, s: f64) -> bool {
        y_level.abs() <= self.delta * (1.0 - s)
    }

    /// `r(q, u)` on the level set, moving along the branch of `q`.
    pub fn level_retract(&self, q: SaddlePoint, u: f64) -> SaddlePoint {
        let y = q.y * (1.0 - u);
        SaddlePoint { x: q.x.signum() * (2.0 * self.eps + y * y).sqrt(), y }
    }
}

/// `σ(p)`, constant along flow lines and `1` on the critical point.
pub fn scene_sigma(scene: &RetractScene, p: SaddlePoint) -> Result<f64> {
    scene.check_domain(p)?;
    if p.is_critical() {
        return Ok(1.0);
    }
    Ok(scene.sigma_on_level(scene.level_point(p)?.y))
}

/// `g = f − 2εσ` and membership in `Y = g⁻¹([c − 3ε, c − ε])` (points of
/// `f⁻¹([c − ε, c])` only).
pub fn scene_g_and_y(scene: &RetractScene, p: SaddlePoint) -> Result<(f64, bool)> {
    let sigma = scene_sigma(scene, p)?;
    let (c, e) = (RetractScene::C, scene.eps);
    let g = p.f() - 2.0 * e * sigma;
    let tol = 1e-12 * (1.0 + e);
    let in_band = p.f() >= c - e - tol && p.f() <= c + tol;
    Ok((g, in_band && g >= c - 3.0 * e - tol && g <= c - e + tol))
}

/// `s_final`. The corner `f = c − ε` with `σ < 1` gives `0`.
pub fn s_final(scene: &RetractScene, p: SaddlePoint) -> Result<f64> {
    let sigma = scene_sigma(scene, p)?;
    let (lo, f) = (RetractScene::C - scene.eps, p.f());
    let span = 2.0 * scene.eps * (1.0 - sigma);
    if f < lo + span {
        Ok(((f - lo) / span).max(0.0))
    } else {
        Ok(1.0)
    }
}

pub fn f_final(scene: &RetractScene, p: SaddlePoint) -> Result<f64> {
    let sigma = scene_sigma(scene, p)?;
    let (lo, f) = (RetractScene::C - scene.eps, p.f());
    let span = 2.0 * scene.eps * (1.0 - sigma);
    Ok(if f < lo + span { lo } else { f - span })
}

/// The interpolated target level `f_s`.
pub fn f_s(scene: &RetractScene, p: SaddlePoint, s: f64) -> Result<f64> {
    let (sf, ff, f) = (s_final(scene, p)?, f_final(scene, p)?, p.f());
    Ok(if s == 0.0 {
        f
    } else if s <= sf {
        let w = s / sf;
        w * ff + (1.0 - w) * f
    } else {
        ff
    })
}

/// `y(p, s) = r(φ(p, τ_{c−ε}(p)), min{s, s_final(p)})`.
pub fn scene_y(scene: &RetractScene, p: SaddlePoint, s: f64) -> Result<SaddlePoint> {
    let q = scene.level_point(p)?;
    Ok(scene.level_retract(q, s.min(s_final(scene, p)?)))
}

/// The composite retract `R(p, s)`, the identity on the critical point.
pub fn scene_retract(scene: &RetractScene, p: SaddlePoint, s: f64) -> Result<SaddlePoint> {
    scene.check_domain(p)?;
    if p.is_critical() {
        return Ok(p);
    }
    let y = scene_y(scene, p, s)?;
    saddle_to_level(y, f_s(scene, p, s)?)
}

/// Whether the order of `σ` and `s` decides membership of `y` in `E` and in its closure.
pub fn trichotomy_holds(scene: &RetractScene, y_level: f64, s: f64) -> bool {
    let sigma = scene.sigma_on_level(y_level);
    let closure = scene.in_e_closure(y_level, s);
    let open = scene.in_e(y_level, s);
    (sigma == s) == (closure && !open) && (sigma < s) == !closure && (sigma > s) == open
}

/// Disjoint-set forest with path halving and union by size.
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensusSet {
    /// Points with `f ≤ sublevel`.
    pub sublevel: f64,
    /// Also include the unstable set `{θ = 0} ∪ {θ = π}` (with the origin).
    pub include_unstable: bool,
}

#[derive(Clone, Debug)]
pub struct CensusGrid {
    pub n_rho: usize,
    pub n_theta: usize,
    pub rho_max: f64,
    /// `component[i * n_theta + j]` for the sample `(ρ_i, θ_j)`; all `ρ = 0`
    /// samples share one label.
    pub component: Vec<Option<usize>>,
    pub components: usize,
}

impl CensusGrid {
    pub fn rho(&self, i: usize) -> f64 {
        self.rho_max * i as f64 / (self.n_rho - 1) as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    /// `(ρ, θ, in_set, component_id)` rows, `component_id = −1` outside the set.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, bool, i64)> + '_ {
        (0..self.n_rho).flat_map(move |i| {
            (0..self.n_theta).map(move |j| {
                let c = self.component[i * self.n_theta + j];
                (self.rho(i), self.theta(j), c.is_some(), c.map_or(-1, |v| v as i64))
            })
        })
    }
}

#[derive(Clone, Debug)]
pub struct CensusReport {
    pub grid: CensusGrid,
    pub components: usize,
    pub refined_components: usize,
    /// False when doubling the resolution changed the count.
    pub stable: bool,
}

pub const CENSUS_RHO_MAX: f64 = 1.5;

/// Connected components of the sampled set on an `n × n` polar grid. The
/// slit quotient has no adjacency between `θ` near `2π` and `θ = 0`; the
/// smooth saddle wraps.
pub fn census_grid(scene: &RetractScene, set: CensusSet, n: usize, rho_max: f64) -> CensusGrid {
    let (n_rho, n_theta) = (n.max(2), n.max(2).div_ceil(2) * 2);
    let grid = CensusGrid { n_rho, n_theta, rho_max, component: Vec::new(), components: 0 };
    let half = n_theta / 2;
    let inside: Vec<bool> = (0..n_rho * n_theta)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_theta, k % n_theta);
            // every ρ = 0 sample is the origin
            let j = if i == 0 { 0 } else { j };
            let p = SlitPoint { rho: grid.rho(i), theta: grid.theta(j) };
            p.f() <= set.sublevel || (set.include_unstable && (j == 0 || j == half))
        })
        .collect();
    let wrap = scene.kind == SceneKind::SmoothSaddle;
    let mut uf = UnionFind::new(n_rho * n_theta);
    let idx = |i: usize, j: usize| i * n_theta + j;
    for j in 1..n_theta {
        if inside[idx(0, j)] && inside[idx(0, 0)] {
            uf.union(idx(0, 0), idx(0, j));
        }
    }
    for i in 0..n_rho {
        for j in 0..n_theta {
            if !inside[idx(i, j)] {
                continue;
            }
            if i + 1 < n_rho && inside[idx(i + 1, j)] {
                uf.union(idx(i, j), idx(i + 1, j));
            }
            let next = if j + 1 < n_theta {
                Some(j + 1)
            } else if wrap {
                Some(0)
            } else {
                None
            };
            if let Some(jn) = next {
                if inside[idx(i, jn)] {
                    uf.union(idx(i, j), idx(i, jn));
                }
            }
        }
    }
    let mut labels = std::collections::HashMap::new();
    let component: Vec<Option<usize>> = (0..n_rho * n_theta)
        .map(|k| {
            inside[k].then(|| {
                let root = uf.find(k);
                let next = labels.len();
                *labels.entry(root).or_insert(next)
            })
        })
        .collect();
    CensusGrid { component, components: labels.len(), ..grid }
}

pub fn connectivity_census(scene: &RetractScene, set: CensusSet, n: usize) -> CensusReport {
    let grid = census_grid(scene, set, n, CENSUS_RHO_MAX);
    let refined = census_grid(scene, set, 2 * n, CENSUS_RHO_MAX).components;
    CensusReport { components: grid.components, refined_components: refined, stable: grid.components == refined, grid }
}

/// The neighbourhood `U` of `W⁻ ∩ f⁻¹(c − ε)` inside the level set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelNeighbourhood {
    /// Level points within the given angle (slit quotient, one-sided at
    /// `θ = 0`) or within the given `|y|` (smooth saddle).
    Window(f64),
    EntireLevelSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition4Witness {
    pub radius: f64,
    /// Starting point in polar coordinates `(ρ, θ)`.
    pub start: (f64, f64),
    /// Landing point on the level set, polar.
    pub landing: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition4Report {
    pub holds: bool,
    pub radii: Vec<f64>,
    /// Samples at each radius that flowed outside `U`.
    pub violations: Vec<usize>,
    pub witness: Option<Condition4Witness>,
}

fn in_window(scene: &RetractScene, landing: SaddlePoint, u: LevelNeighbourhood) -> bool {
    match u {
        LevelNeighbourhood::EntireLevelSet => true,
        LevelNeighbourhood::Window(w) => match scene.kind {
            SceneKind::SmoothSaddle => landing.y.abs() < w,
            SceneKind::SlitQuotient => {
                let th = SlitPoint::from_plane(landing).theta;
                th < w || (th - PI).abs() < w
            }
        },
    }
}

/// Sample circles of shrinking radius around the critical point (off the
/// stable set), flow each sample to `f = c − ε`, and check it lands in `U`.
/// Holds if at some tested radius every sample lands in `U`.
pub fn condition4_probe(
    scene: &RetractScene,
    u: LevelNeighbourhood,
    neighbourhood_radius: f64,
    samples: usize,
    halvings: usize,
) -> Condition4Report {
    let level = RetractScene::C - scene.eps;
    let radii: Vec<f64> = (0..=halvings).map(|m| neighbourhood_radius * 0.5f64.powi(m as i32)).collect();
    let mut violations = Vec::new();
    let mut witness = None;
    let mut holds = false;
    for &r in &radii {
        let mut bad = 0;
        for k in 0..samples {
            let theta = TAU * (k as f64 + 0.5) / samples as f64;
            let start = SlitPoint { rho: r, theta };
            let p = start.to_plane();
            if p.x.abs() < 1e-12 * r {
                continue;
            }
            let Ok(landing) = saddle_to_level(p, level) else { continue };
            if !in_window(scene, landing, u) {
                bad += 1;
                let lp = SlitPoint::from_plane(landing);
                witness = Some(Condition4Witness { radius: r, start: (start.rho, start.theta), landing: (lp.rho, lp.theta) });
            }
        }
        violations.push(bad);
        holds |= bad == 0;
    }
    if holds {
        witness = None;
    }
    Condition4Report { holds, radii, violations, witness }
}

/// Largest `‖R(p, s) − R(q, s)‖` over neighbouring grid points of `Y` in an
/// `n × n` box around the origin, for the given `s` values.
pub fn retract_modulus(scene: &RetractScene, n: usize, s_values: &[f64]) -> Result<f64> {
    scene.require_saddle()?;
    let half = 2.0 * (scene.eps).sqrt();
    let h = 2.0 * half / (n - 1) as f64;
    let pt = |i: usize, j: usize| SaddlePoint::new(-half + i as f64 * h, -half + j as f64 * h);
    let in_y = |p: SaddlePoint| p.x != 0.0 && matches!(scene_g_and_y(scene, p), Ok((_, true)));
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut w: f64 = 0.0;
            for j in 0..n {
                let p = pt(i, j);
                if !in_y(p) {
                    continue;
                }
                for q in [(i + 1, j), (i, j + 1)].into_iter().filter(|&(a, b)| a < n && b < n).map(|(a, b)| pt(a, b))
                {
                    if !in_y(q) {
                        continue;
                    }
                    for &s in s_values {
                        if let (Ok(a), Ok(b)) = (scene_retract(scene, p, s), scene_retract(scene, q, s)) {
                            w = w.max(a.distance(&b));
                        }
                    }
                }
            }
            w
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetractSuiteReport {
    pub pairs: usize,
    /// Sampled `(p, s)` pairs where the `σ`-versus-`s` trichotomy failed.
    pub trichotomy_failures: usize,
    /// `max ‖R(p, 0) − p‖`.
    pub identity_defect: f64,
    /// `max |f(R(p, 1)) − f_final(p)|`.
    pub final_level_defect: f64,
    /// `max min(|f(R(p, 1)) − (c − ε)|, |y(R(p, 1))|)`.
    pub landing_defect: f64,
    /// Pairs whose evaluation raised an error.
    pub errors: usize,
}

/// Sample `pairs` points of `Y` by rejection from a box around the critical
/// point, each with a uniform `s ∈ [0, 1)`, and measure the retract contract
/// on them.
pub fn retract_suite(scene: &RetractScene, pairs: usize, seed: u64) -> Result<RetractSuiteReport> {
    scene.require_saddle()?;
    let b = (2.0 * scene.eps).sqrt() + scene.delta;
    let mut rng = sampling::stream_rng(seed, 0);
    let mut points = Vec::with_capacity(pairs);
    let mut attempts = 0usize;
    while points.len() < pairs && attempts < 1000 * pairs.max(1) {
        attempts += 1;
        let p = SaddlePoint::new(rng.random_range(-b..b), rng.random_range(-b..b));
        if p.x == 0.0 || !matches!(scene_g_and_y(scene, p), Ok((_, true))) {
            continue;
        }
        points.push((p, rng.random::<f64>()));
    }
    if points.len() < pairs {
        return Err(Error::Precondition(format!("sampled only {} points of Y", points.len())));
    }
    let level = RetractScene::C - scene.eps;
    let per: Vec<Option<(bool, f64, f64, f64)>> = points
        .par_iter()
        .map(|&(p, s)| {
            let q = scene.level_point(p).ok()?;
            let tri = trichotomy_holds(scene, q.y, s);
            let r0 = scene_retract(scene, p, 0.0).ok()?;
            let r1 = scene_retract(scene, p, 1.0).ok()?;
            let ff = f_final(scene, p).ok()?;
            Some((tri, r0.distance(&p), (r1.f() - ff).abs(), (r1.f() - level).abs().min(r1.y.abs())))
        })
        .collect();
    let mut report = RetractSuiteReport {
        pairs,
        trichotomy_failures: 0,
        identity_defect: 0.0,
        final_level_defect: 0.0,
        landing_defect: 0.0,
        errors: 0,
    };
    for r in per {
        match r {
            Some((tri, id, fl, land)) => {
                report.trichotomy_failures += usize::from(!tri);
                report.identity_defect = report.identity_defect.max(id);
                report.final_level_defect = report.final_level_defect.max(fl);
                report.landing_defect = report.landing_defect.max(land);
            }
            None => report.errors += 1,
        }
    }
    Ok(report)
}
