//! Moment map, the function `f = ‖μ − α‖²`, its gradient flow velocity and
//! finite-difference differential checks.
//!
//! Conventions, fixed here and used everywhere else:
//!
//! * `μ(x)` is stored as the Hermitian collection
//!   `H_i = ½(Σ_{h(a)=i} x_a x_a† − Σ_{t(a)=i} x_a† x_a)`.
//! * The Hermitian product on `Rep` is `⟨X, Y⟩ = Σ_a tr(X_a Y_a†)`, so the
//!   real metric is `Re⟨·,·⟩` and `ω = Im⟨·,·⟩`.
//! * `u = iA ∈ 𝔨` (with `A` Hermitian) pairs with `μ` as `μ(x)·u = Σ_i tr(H_i A_i)`.
//!   With these choices `μ(x)·u = ½ ω(ρ_x(u), x)` and the moment map equation
//!   `dμ_x(X)·u = ω(ρ_x(u), X)` hold with no extra signs.
//! * `grad f = 2 ρ_x(μ − α)` and the integrated field is
//!   `ẋ = −ρ_x(μ − α) = −½ grad f`, so `df/dt = −2‖ẋ‖²`.

use nalgebra::DMatrix;

use crate::linalg::{self, frob2, hermitian_eigen, CMat, C64};
use crate::quiver::{GroupElement, LieAlgebraElement, RepSpace, Representation};

/// Default Hessian difference step.
pub const HESSIAN_STEP: f64 = 1e-4;

/// One Hermitian matrix per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianCollection {
    pub blocks: Vec<CMat>,
}

impl HermitianCollection {
    /// Frobenius pairing `Σ_i tr(A_i B_i)` (real for Hermitian blocks).
    pub fn inner(&self, other: &Self) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| (a * b).trace().re).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.iter().map(frob2).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() }
    }

    /// `H − α` with `α_i` acting as a multiple of the identity.
    pub fn shift(&self, alpha: &CentralShift) -> Self {
        let blocks = self
            .blocks
            .iter()
            .zip(&alpha.0)
            .map(|(h, &a)| h - CMat::identity(h.nrows(), h.ncols()) * C64::new(a, 0.0))
            .collect();
        Self { blocks }
    }

    /// `k_i H_i k_i†`.
    pub fn conjugate(&self, k: &GroupElement) -> Self {
        Self {
            blocks: self.blocks.iter().zip(&k.blocks).map(|(h, g)| g * h * g.adjoint()).collect(),
        }
    }

    /// Sorted eigenvalues of every block.
    pub fn spectra(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| hermitian_eigen(b).0).collect()
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        self.blocks.iter().map(linalg::hermitian_defect).fold(0.0, f64::max)
    }

    pub fn as_lie(&self) -> LieAlgebraElement {
        LieAlgebraElement { blocks: self.blocks.clone(), hermitian: true }
    }
}

/// Central element `α`: a real scalar per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralShift(pub Vec<f64>);

impl CentralShift {
    pub fn zero(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

/// `μ(x)` as Hermitian blocks, symmetrized.
pub fn moment(space: &RepSpace, x: &Representation) -> HermitianCollection {
    let q = space.quiver();
    let mut blocks: Vec<CMat> = space.dims().0.iter().map(|&n| CMat::zeros(n, n)).collect();
    for (a, xa) in x.blocks.iter().enumerate() {
        blocks[q.head(a)] += xa * xa.adjoint();
        blocks[q.tail(a)] -= xa.adjoint() * xa;
    }
    for b in &mut blocks {
        *b = linalg::hermitian_part(b) * C64::new(0.5, 0.0);
    }
    HermitianCollection { blocks }
}

/// `β(x) = μ(x) − α`.
pub fn shifted_moment(space: &RepSpace, x: &Representation, alpha: &CentralShift) -> HermitianCollection {
    moment(space, x).shift(alpha)
}

/// `f(x) = Σ_i ‖H_i(x) − α_i I‖²_F`.
pub fn f_value(space: &RepSpace, x: &Representation, alpha: &CentralShift) -> f64 {
    shifted_moment(space, x, alpha).norm_sqr()
}

/// Flow velocity `−ρ_x(μ(x) − α) = −½ grad f(x)`.
pub fn flow_velocity(space: &RepSpace, x: &Representation, alpha: &CentralShift) -> Representation {
    let beta = shifted_moment(space, x, alpha);
    space.infinitesimal_action_blocks(&beta.blocks, x).scale(-1.0)
}

/// `grad f(x) = 2 ρ_x(μ(x) − α)`.
pub fn gradient(space: &RepSpace, x: &Representation, alpha: &CentralShift) -> Representation {
    let beta = shifted_moment(space, x, alpha);
    space.infinitesimal_action_blocks(&beta.blocks, x).scale(2.0)
}

pub fn gradient_norm(space: &RepSpace, x: &Representation, alpha: &CentralShift) -> f64 {
    gradient(space, x, alpha).norm()
}

/// Central-difference gradient of `f` in flattened coordinates.
pub fn fd_gradient(space: &RepSpace, x: &Representation, alpha: &CentralShift, step: f64) -> Vec<f64> {
    let base = space.flatten(x);
    let mut probe = base.clone();
    (0..base.len())
        .map(|i| {
            probe[i] = base[i] + step;
            let fp = f_value(space, &space.unflatten(&probe), alpha);
            probe[i] = base[i] - step;
            let fm = f_value(space, &space.unflatten(&probe), alpha);
            probe[i] = base[i];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Defect `|d/dh (μ(x + hX)·u) − ω(ρ_x(u), X)|` using a central difference
/// with `step`. `u` is taken as its skew-Hermitian part, `u = iA`.
pub fn moment_map_equation_check(
    space: &RepSpace,
    x: &Representation,
    tangent: &Representation,
    u: &LieAlgebraElement,
    step: f64,
) -> f64 {
    let skew: Vec<CMat> = u.blocks.iter().map(|b| (b - b.adjoint()) * C64::new(0.5, 0.0)).collect();
    let herm: Vec<CMat> = skew.iter().map(|b| b * C64::new(0.0, -1.0)).collect();
    let pair = |y: &Representation| -> f64 {
        let h = moment(space, y);
        h.blocks.iter().zip(&herm).map(|(hi, ai)| (hi * ai).trace().re).sum()
    };
    let lhs = (pair(&x.axpy(step, tangent)) - pair(&x.axpy(-step, tangent))) / (2.0 * step);
    let rho = space.infinitesimal_action_blocks(&skew, x);
    let omega: f64 = rho
        .blocks
        .iter()
        .zip(&tangent.blocks)
        .map(|(p, q)| p.iter().zip(q.iter()).map(|(a, b)| (a * b.conj()).im).sum::<f64>())
        .sum();
    (lhs - omega).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianStatus {
    Ok,
    /// Asymmetry of the raw difference matrix exceeded tolerance; the step is
    /// probably too small for the arithmetic.
    Cancellation,
}

#[derive(Clone, Debug)]
pub struct Hessian {
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub asymmetry: f64,
    pub status: HessianStatus,
}

impl Hessian {
    /// Scale used by the eigenvalue thresholds: `1 + max |λ|`.
    pub fn scale(&self) -> f64 {
        1.0 + self.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
    }

    /// Eigenvalues below `−1e-6 · scale`.
    pub fn negative_count(&self) -> usize {
        let thr = 1e-6 * self.scale();
        self.eigenvalues.iter().filter(|&&l| l < -thr).count()
    }
}

/// Hessian of `f` by central differences of the analytic gradient with one
/// Richardson step (`h` and `2h`), symmetrized.
pub fn hessian_fd(space: &RepSpace, x: &Representation, alpha: &CentralShift, step: f64) -> Hessian {
    let n = space.real_dim();
    let base = space.flatten(x);
    let diff = |h: f64| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut probe = base.clone();
        for i in 0..n {
            probe[i] = base[i] + h;
            let gp = space.flatten(&gradient(space, &space.unflatten(&probe), alpha));
            probe[i] = base[i] - h;
            let gm = space.flatten(&gradient(space, &space.unflatten(&probe), alpha));
            probe[i] = base[i];
            for j in 0..n {
                m[(i, j)] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        m
    };
    let raw = (diff(step) * 4.0 - diff(2.0 * step)) / 3.0;
    let asym = (&raw - raw.transpose()).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mag = raw.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let status = if asym > 1e-6 * (1.0 + mag) { HessianStatus::Cancellation } else { HessianStatus::Ok };
    let matrix = (&raw + raw.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
    };
    eigenvalues.sort_by(f64::total_cmp);
    Hessian { matrix, eigenvalues, asymmetry: asym, status }
}
