//! Quivers, dimension vectors and representation points, together with the
//! complex group action `g · x = (g_{h(a)} x_a g_{t(a)}⁻¹)_a`, its
//! infinitesimal version, relations and cycle-trace monitors.
//!
//! Real coordinates: a representation is flattened edge-major, each block
//! column-major, each entry as `(re, im)`. The Lie algebra `⊕ gl(v_i)` is
//! flattened vertex-major with the same per-block order. The Euclidean
//! product on these coordinates is `Re Σ_a tr(x_a y_a†)`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, cidentity, condition_number, czero, frob2, CMat, C64};

/// Condition-number bound above which a group block counts as singular.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub name: String,
    pub tail: usize,
    pub head: usize,
}

/// A finite directed multigraph. Loops and multiple edges are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct Quiver {
    vertices: Vec<String>,
    edges: Vec<Edge>,
}

impl Quiver {
    pub fn new(vertices: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if vertices[..i].contains(v) {
                return Err(Error::InvalidQuiver(format!("duplicate vertex name {v:?}")));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.tail >= vertices.len() || e.head >= vertices.len() {
                return Err(Error::InvalidQuiver(format!(
                    "edge {:?} references a missing vertex",
                    e.name
                )));
            }
            if edges[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::InvalidQuiver(format!("duplicate edge name {:?}", e.name)));
            }
        }
        Ok(Self { vertices, edges })
    }

    /// One vertex with `loops` loop edges named `x`, `y`, `z`, ... .
    pub fn jordan(loops: usize) -> Self {
        const NAMES: [&str; 6] = ["x", "y", "z", "w", "u", "v"];
        let edges = (0..loops)
            .map(|k| Edge {
                name: NAMES.get(k).map(|s| s.to_string()).unwrap_or(format!("l{k}")),
                tail: 0,
                head: 0,
            })
            .collect();
        Self { vertices: vec!["1".into()], edges }
    }

    /// `1 --a--> 2`.
    pub fn a2() -> Self {
        Self {
            vertices: vec!["1".into(), "2".into()],
            edges: vec![Edge { name: "a".into(), tail: 0, head: 1 }],
        }
    }

    /// Disjoint union of `n` copies of A2: vertices `2k, 2k+1`, edge `a{k}`.
    pub fn a2_product(n: usize) -> Self {
        let vertices = (0..2 * n).map(|i| format!("{}", i + 1)).collect();
        let edges = (0..n)
            .map(|k| Edge { name: format!("a{k}"), tail: 2 * k, head: 2 * k + 1 })
            .collect();
        Self { vertices, edges }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn head(&self, a: usize) -> usize {
        self.edges[a].head
    }

    pub fn tail(&self, a: usize) -> usize {
        self.edges[a].tail
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }
}

/// Per-vertex ranks `v_i = dim V_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionVector(pub Vec<usize>);

impl DimensionVector {
    pub fn new(v: Vec<usize>) -> Self {
        Self(v)
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// A point of `Rep(Q, v)`: one `v_{h(a)} × v_{t(a)}` complex block per edge.
/// Tangent vectors share the same representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub blocks: Vec<CMat>,
}

impl Representation {
    pub fn norm_sqr(&self) -> f64 {
        self.blocks.iter().map(frob2).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Real inner product `Re Σ_a tr(x_a y_a†)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| (p * q.conj()).re).sum::<f64>())
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|a| a * C64::new(s, 0.0)).collect() }
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b * C64::new(s, 0.0))
                .collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

/// An element of `G_v = Π GL(V_i)`; `unitary` marks elements of `K_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub blocks: Vec<CMat>,
    pub unitary: bool,
}

impl GroupElement {
    pub fn identity(dims: &DimensionVector) -> Self {
        Self { blocks: dims.0.iter().map(|&n| cidentity(n)).collect(), unitary: true }
    }

    pub fn new(blocks: Vec<CMat>) -> Self {
        Self { blocks, unitary: false }
    }

    pub fn random_unitary<R: Rng + ?Sized>(dims: &DimensionVector, rng: &mut R) -> Self {
        Self {
            blocks: dims.0.iter().map(|&n| linalg::random_unitary(rng, n)).collect(),
            unitary: true,
        }
    }

    /// Random element of `G_v` close to the identity: `I + scale · Z`.
    pub fn random_near_identity<R: Rng + ?Sized>(
        dims: &DimensionVector,
        rng: &mut R,
        scale: f64,
    ) -> Self {
        Self {
            blocks: dims
                .0
                .iter()
                .map(|&n| cidentity(n) + linalg::random_complex(rng, n, n, scale))
                .collect(),
            unitary: false,
        }
    }

    /// `exp(u)` blockwise; unitary when `u` is skew-Hermitian.
    pub fn exp(u: &LieAlgebraElement) -> Self {
        let blocks: Vec<CMat> = u.blocks.iter().map(|b| b.clone().exp()).collect();
        let unitary = u
            .blocks
            .iter()
            .all(|b| (b + b.adjoint()).iter().all(|z| z.norm() < 1e-14 * (1.0 + b.norm())));
        Self { blocks, unitary }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
            unitary: self.unitary && other.unitary,
        }
    }

    /// Largest deviation of `g g†` from the identity over all blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|g| {
                let d = g * g.adjoint() - cidentity(g.nrows());
                d.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Blockwise inverses; unitary blocks are inverted by adjoint.
    pub fn inverse_blocks(&self, condition_bound: f64) -> Result<Vec<CMat>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, g)| {
                if self.unitary {
                    return Ok(g.adjoint());
                }
                let condition = condition_number(g);
                if !(condition <= condition_bound) {
                    return Err(Error::NonInvertibleGroupElement { vertex: i, condition });
                }
                g.clone()
                    .try_inverse()
                    .ok_or(Error::NonInvertibleGroupElement { vertex: i, condition })
            })
            .collect()
    }
}

/// An element of `𝔤_v = ⊕ gl(V_i)`. `hermitian` marks blocks that are
/// Hermitian, the form in which elements of `𝔨*` (such as `μ(x)` or `β`) are
/// carried.
#[derive(Clone, Debug, PartialEq)]
pub struct LieAlgebraElement {
    pub blocks: Vec<CMat>,
    pub hermitian: bool,
}

impl LieAlgebraElement {
    pub fn zero(dims: &DimensionVector) -> Self {
        Self { blocks: dims.0.iter().map(|&n| czero(n, n)).collect(), hermitian: true }
    }

    pub fn new(blocks: Vec<CMat>) -> Self {
        let hermitian = blocks.iter().all(|b| linalg::hermitian_defect(b) < 1e-12);
        Self { blocks, hermitian }
    }

    pub fn scale(&self, s: C64) -> Self {
        let blocks: Vec<CMat> = self.blocks.iter().map(|b| b * s).collect();
        Self::new(blocks)
    }

    pub fn random<R: Rng + ?Sized>(dims: &DimensionVector, rng: &mut R, scale: f64) -> Self {
        Self::new(dims.0.iter().map(|&n| linalg::random_complex(rng, n, n, scale)).collect())
    }

    /// Random skew-Hermitian element (a point of `𝔨`).
    pub fn random_skew<R: Rng + ?Sized>(dims: &DimensionVector, rng: &mut R, scale: f64) -> Self {
        let blocks = dims
            .0
            .iter()
            .map(|&n| linalg::random_hermitian(rng, n, scale) * C64::new(0.0, 1.0))
            .collect();
        Self { blocks, hermitian: false }
    }
}

/// A linear combination of paths sharing source and target vertices. A path
/// `[e_1, …, e_k]` traverses `e_1` first and evaluates to `x_{e_k} ⋯ x_{e_1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub terms: Vec<(C64, Vec<usize>)>,
    pub source: usize,
    pub target: usize,
}

impl Relation {
    pub fn new(quiver: &Quiver, name: impl Into<String>, terms: Vec<(C64, Vec<usize>)>) -> Result<Self> {
        let name = name.into();
        let mut ends = None;
        for (_, path) in &terms {
            let (s, t) = path_ends(quiver, path).map_err(Error::InvalidRelation)?;
            match ends {
                None => ends = Some((s, t)),
                Some(e) if e != (s, t) => {
                    return Err(Error::InvalidRelation(format!(
                        "relation {name:?}: paths do not share source and target"
                    )))
                }
                _ => {}
            }
        }
        let (source, target) =
            ends.ok_or_else(|| Error::InvalidRelation(format!("relation {name:?} has no terms")))?;
        Ok(Self { name, terms, source, target })
    }

    /// `[x, y] = xy − yx` on two loops at one vertex.
    pub fn commutator(quiver: &Quiver, x: usize, y: usize) -> Result<Self> {
        Self::new(
            quiver,
            "commutator",
            vec![(C64::new(1.0, 0.0), vec![y, x]), (C64::new(-1.0, 0.0), vec![x, y])],
        )
    }

    /// Smallest path length among the terms.
    pub fn min_degree(&self) -> usize {
        self.terms.iter().map(|(_, p)| p.len()).min().unwrap_or(0)
    }
}

/// A closed composable edge sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleWord {
    pub name: String,
    pub path: Vec<usize>,
}

impl CycleWord {
    pub fn new(quiver: &Quiver, name: impl Into<String>, path: Vec<usize>) -> Result<Self> {
        let name = name.into();
        let (s, t) = path_ends(quiver, &path).map_err(Error::InvalidCycle)?;
        if s != t {
            return Err(Error::InvalidCycle(format!("word {name:?} starts at {s} and ends at {t}")));
        }
        Ok(Self { name, path })
    }
}

fn path_ends(quiver: &Quiver, path: &[usize]) -> std::result::Result<(usize, usize), String> {
    let first = *path.first().ok_or_else(|| "empty path".to_string())?;
    for &e in path {
        if e >= quiver.edge_count() {
            return Err(format!("edge index {e} out of range"));
        }
    }
    for w in path.windows(2) {
        if quiver.tail(w[1]) != quiver.head(w[0]) {
            return Err(format!(
                "edge {} does not start where edge {} ends",
                quiver.edges()[w[1]].name,
                quiver.edges()[w[0]].name
            ));
        }
    }
    Ok((quiver.tail(first), quiver.head(*path.last().unwrap())))
}

/// A quiver with a validated dimension vector: the space `Rep(Q, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepSpace {
    quiver: Quiver,
    dims: DimensionVector,
    pub condition_bound: f64,
}

impl RepSpace {
    pub fn new(quiver: Quiver, dims: DimensionVector) -> Result<Self> {
        if dims.0.len() != quiver.vertex_count() {
            return Err(Error::Shape(format!(
                "dimension vector has {} entries for {} vertices",
                dims.0.len(),
                quiver.vertex_count()
            )));
        }
        Ok(Self { quiver, dims, condition_bound: DEFAULT_CONDITION_BOUND })
    }

    pub fn quiver(&self) -> &Quiver {
        &self.quiver
    }

    pub fn dims(&self) -> &DimensionVector {
        &self.dims
    }

    /// `(v_{h(a)}, v_{t(a)})`.
    pub fn block_shape(&self, a: usize) -> (usize, usize) {
        (self.dims.0[self.quiver.head(a)], self.dims.0[self.quiver.tail(a)])
    }

    /// Real dimension `2 Σ_a v_{h(a)} v_{t(a)}`.
    pub fn real_dim(&self) -> usize {
        (0..self.quiver.edge_count())
            .map(|a| {
                let (r, c) = self.block_shape(a);
                2 * r * c
            })
            .sum()
    }

    /// Real dimension `2 Σ_i v_i²` of `𝔤_v`.
    pub fn lie_real_dim(&self) -> usize {
        self.dims.0.iter().map(|&n| 2 * n * n).sum()
    }

    pub fn zero(&self) -> Representation {
        Representation {
            blocks: (0..self.quiver.edge_count())
                .map(|a| {
                    let (r, c) = self.block_shape(a);
                    czero(r, c)
                })
                .collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Representation {
        Representation {
            blocks: (0..self.quiver.edge_count())
                .map(|a| {
                    let (r, c) = self.block_shape(a);
                    linalg::random_complex(rng, r, c, scale)
                })
                .collect(),
        }
    }

    pub fn check(&self, x: &Representation) -> Result<()> {
        if x.blocks.len() != self.quiver.edge_count() {
            return Err(Error::Shape(format!(
                "representation has {} blocks for {} edges",
                x.blocks.len(),
                self.quiver.edge_count()
            )));
        }
        for (a, b) in x.blocks.iter().enumerate() {
            if b.shape() != self.block_shape(a) {
                return Err(Error::Shape(format!(
                    "block {} has shape {:?}, expected {:?}",
                    self.quiver.edges()[a].name,
                    b.shape(),
                    self.block_shape(a)
                )));
            }
        }
        Ok(())
    }

    fn check_vertex_blocks(&self, blocks: &[CMat], what: &str) -> Result<()> {
        if blocks.len() != self.dims.0.len() {
            return Err(Error::Shape(format!("{what} has {} blocks", blocks.len())));
        }
        for (i, b) in blocks.iter().enumerate() {
            let n = self.dims.0[i];
            if b.shape() != (n, n) {
                return Err(Error::Shape(format!("{what} block {i} has shape {:?}", b.shape())));
            }
        }
        Ok(())
    }

    pub fn flatten(&self, x: &Representation) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.real_dim());
        for b in &x.blocks {
            flatten_block(b, &mut out);
        }
        out
    }

    pub fn unflatten(&self, v: &[f64]) -> Representation {
        debug_assert_eq!(v.len(), self.real_dim());
        let mut pos = 0;
        let blocks = (0..self.quiver.edge_count())
            .map(|a| {
                let (r, c) = self.block_shape(a);
                unflatten_block(r, c, v, &mut pos)
            })
            .collect();
        Representation { blocks }
    }

    pub fn flatten_lie(&self, u: &LieAlgebraElement) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.lie_real_dim());
        for b in &u.blocks {
            flatten_block(b, &mut out);
        }
        out
    }

    pub fn unflatten_lie(&self, v: &[f64]) -> LieAlgebraElement {
        let mut pos = 0;
        let blocks = self.dims.0.iter().map(|&n| unflatten_block(n, n, v, &mut pos)).collect();
        LieAlgebraElement::new(blocks)
    }

    /// `g · x`, blockwise `g_{h(a)} x_a g_{t(a)}⁻¹`.
    pub fn act(&self, g: &GroupElement, x: &Representation) -> Result<Representation> {
        self.check(x)?;
        self.check_vertex_blocks(&g.blocks, "group element")?;
        let inv = g.inverse_blocks(self.condition_bound)?;
        let blocks = x
            .blocks
            .iter()
            .enumerate()
            .map(|(a, xa)| &g.blocks[self.quiver.head(a)] * xa * &inv[self.quiver.tail(a)])
            .collect();
        Ok(Representation { blocks })
    }

    /// `ρ_x(u)_a = u_{h(a)} x_a − x_a u_{t(a)}`.
    pub fn infinitesimal_action(&self, u: &LieAlgebraElement, x: &Representation) -> Representation {
        self.infinitesimal_action_blocks(&u.blocks, x)
    }

    pub(crate) fn infinitesimal_action_blocks(&self, u: &[CMat], x: &Representation) -> Representation {
        let blocks = x
            .blocks
            .iter()
            .enumerate()
            .map(|(a, xa)| &u[self.quiver.head(a)] * xa - xa * &u[self.quiver.tail(a)])
            .collect();
        Representation { blocks }
    }

    /// `ρ_x : 𝔤 → Rep` as an explicit real matrix in the flattened coordinates.
    pub fn rho_matrix(&self, x: &Representation) -> DMatrix<f64> {
        let rows = self.real_dim();
        let cols = self.lie_real_dim();
        let mut m = DMatrix::zeros(rows, cols);
        let mut basis = vec![0.0; cols];
        for j in 0..cols {
            basis[j] = 1.0;
            let u = self.unflatten_lie(&basis);
            let col = self.flatten(&self.infinitesimal_action(&u, x));
            m.set_column(j, &linalg::dvec(&col));
            basis[j] = 0.0;
        }
        m
    }

    /// Numerical real rank of `ρ_x` (singular values above `tol · σ_max`).
    pub fn rho_rank(&self, x: &Representation, tol: f64) -> usize {
        linalg::numerical_rank(&self.rho_matrix(x), tol)
    }

    /// Product of the blocks along a composable path.
    pub fn path_product(&self, x: &Representation, path: &[usize]) -> CMat {
        let mut acc = x.blocks[path[0]].clone();
        for &e in &path[1..] {
            acc = &x.blocks[e] * acc;
        }
        acc
    }

    /// Value of the relation's defining matrix at `x`.
    pub fn relation_value(&self, x: &Representation, r: &Relation) -> CMat {
        let (t, s) = (self.dims.0[r.target], self.dims.0[r.source]);
        let mut acc = czero(t, s);
        for (c, path) in &r.terms {
            acc += self.path_product(x, path) * *c;
        }
        acc
    }

    /// Frobenius norm of the relation evaluated at `x`.
    pub fn relation_residual(&self, x: &Representation, r: &Relation) -> f64 {
        frob2(&self.relation_value(x, r)).sqrt()
    }

    /// Trace of the product of blocks around the cycle.
    pub fn cycle_trace(&self, x: &Representation, w: &CycleWord) -> Result<C64> {
        let (s, t) = path_ends(&self.quiver, &w.path).map_err(Error::InvalidCycle)?;
        if s != t {
            return Err(Error::InvalidCycle(format!("word {:?} is not closed", w.name)));
        }
        Ok(self.path_product(x, &w.path).trace())
    }
}

fn flatten_block(b: &CMat, out: &mut Vec<f64>) {
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let z = b[(i, j)];
            out.push(z.re);
            out.push(z.im);
        }
    }
}

fn unflatten_block(r: usize, c: usize, v: &[f64], pos: &mut usize) -> CMat {
    let mut m = czero(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = C64::new(v[*pos], v[*pos + 1]);
            *pos += 2;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn jordan2() -> RepSpace {
        RepSpace::new(Quiver::jordan(1), DimensionVector::new(vec![2])).unwrap()
    }

    #[test]
    fn identity_action_is_trivial() {
        let space = RepSpace::new(Quiver::jordan(2), DimensionVector::new(vec![3])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = space.random(&mut rng, 1.0);
        let y = space.act(&GroupElement::identity(space.dims()), &x).unwrap();
        assert!(x.distance(&y) < 1e-15);
    }

    #[test]
    fn jordan_diagonal_action_by_hand() {
        let space = jordan2();
        let g = GroupElement::new(vec![CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0), c(1.0)]))]);
        let x = Representation { blocks: vec![CMat::from_row_slice(2, 2, &[c(0.), c(1.), c(0.), c(0.)])] };
        let y = space.act(&g, &x).unwrap();
        let expected = CMat::from_row_slice(2, 2, &[c(0.), c(2.), c(0.), c(0.)]);
        assert!((&y.blocks[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn singular_group_element_is_rejected() {
        let space = jordan2();
        let g = GroupElement::new(vec![CMat::from_row_slice(2, 2, &[c(1.), c(1.), c(1.), c(1.)])]);
        let x = space.zero();
        assert!(matches!(space.act(&g, &x), Err(Error::NonInvertibleGroupElement { vertex: 0, .. })));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let space = jordan2();
        let x = Representation { blocks: vec![czero(1, 1)] };
        assert!(matches!(space.act(&GroupElement::identity(space.dims()), &x), Err(Error::Shape(_))));
    }

    #[test]
    fn action_composes() {
        let space = RepSpace::new(
            Quiver::new(
                vec!["1".into(), "2".into()],
                vec![
                    Edge { name: "a".into(), tail: 0, head: 1 },
                    Edge { name: "b".into(), tail: 1, head: 0 },
                    Edge { name: "l".into(), tail: 1, head: 1 },
                ],
            )
            .unwrap(),
            DimensionVector::new(vec![2, 3]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = space.random(&mut rng, 1.0);
            let g = GroupElement::random_unitary(space.dims(), &mut rng);
            let h = GroupElement::random_near_identity(space.dims(), &mut rng, 0.3);
            let lhs = space.act(&g, &space.act(&h, &x).unwrap()).unwrap();
            let rhs = space.act(&g.compose(&h), &x).unwrap();
            assert!(lhs.distance(&rhs) < 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn infinitesimal_action_of_zero_and_scalars() {
        let space = RepSpace::new(Quiver::jordan(1), DimensionVector::new(vec![1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = space.random(&mut rng, 1.0);
        let u = LieAlgebraElement::random(space.dims(), &mut rng, 1.0);
        assert_eq!(space.infinitesimal_action(&u, &x).norm(), 0.0);
        let z = LieAlgebraElement::zero(space.dims());
        assert_eq!(space.infinitesimal_action(&z, &space.random(&mut rng, 1.0)).norm(), 0.0);
    }

    #[test]
    fn infinitesimal_action_is_derivative_of_action() {
        let space = RepSpace::new(Quiver::jordan(2), DimensionVector::new(vec![2])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = space.random(&mut rng, 1.0);
        let u = LieAlgebraElement::random(space.dims(), &mut rng, 1.0);
        let rho = space.infinitesimal_action(&u, &x);
        let mut errs = Vec::new();
        for t in [1e-3, 1e-4, 1e-5] {
            let g = GroupElement::exp(&u.scale(C64::new(t, 0.0)));
            let moved = space.act(&g, &x).unwrap();
            let fd = moved.sub(&x).scale(1.0 / t);
            errs.push(fd.distance(&rho));
        }
        // first-order decay: each decade shrinks the error by roughly 10
        assert!(errs[0] < 1e-2);
        assert!(errs[1] < errs[0] / 5.0 && errs[2] < errs[1] / 5.0, "{errs:?}");
    }

    #[test]
    fn rho_rank_examples() {
        let a2 = RepSpace::new(Quiver::a2(), DimensionVector::new(vec![1, 1])).unwrap();
        assert_eq!(a2.rho_rank(&a2.zero(), RANK_TOL_TEST), 0);
        let x = Representation { blocks: vec![CMat::from_element(1, 1, c(1.0))] };
        assert_eq!(a2.rho_rank(&x, RANK_TOL_TEST), 2);

        // generic point of the Jordan quiver: orbit of a regular matrix has
        // complex dimension n² − n
        let j = jordan2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = j.random(&mut rng, 1.0);
        assert_eq!(j.rho_rank(&x, RANK_TOL_TEST), 4);
    }

    const RANK_TOL_TEST: f64 = 1e-9;

    #[test]
    fn rho_rank_matches_sampled_orbit_dimension() {
        let j = jordan2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = j.random(&mut rng, 1.0);
        // tangent vectors from small random group elements span the orbit
        let t = 1e-6;
        let cols: Vec<Vec<f64>> = (0..16)
            .map(|_| {
                let u = LieAlgebraElement::random(j.dims(), &mut rng, 1.0);
                let g = GroupElement::exp(&u.scale(C64::new(t, 0.0)));
                let d = j.act(&g, &x).unwrap().sub(&x).scale(1.0 / t);
                j.flatten(&d)
            })
            .collect();
        let m = DMatrix::from_fn(j.real_dim(), cols.len(), |r, c| cols[c][r]);
        assert_eq!(linalg::numerical_rank(&m, 1e-4), j.rho_rank(&x, RANK_TOL_TEST));
    }

    #[test]
    fn relation_residual_examples() {
        let q = Quiver::jordan(2);
        let space = RepSpace::new(q.clone(), DimensionVector::new(vec![2])).unwrap();
        let r = Relation::commutator(&q, 0, 1).unwrap();
        let diag = |a: f64, b: f64| CMat::from_row_slice(2, 2, &[c(a), c(0.), c(0.), c(b)]);
        let x = Representation { blocks: vec![diag(1.0, 2.0), diag(-3.0, 0.5)] };
        assert_eq!(space.relation_residual(&x, &r), 0.0);

        let x = Representation {
            blocks: vec![
                CMat::from_row_slice(2, 2, &[c(0.), c(1.), c(0.), c(0.)]),
                CMat::from_row_slice(2, 2, &[c(0.), c(0.), c(1.), c(0.)]),
            ],
        };
        assert!((space.relation_residual(&x, &r) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(space.relation_residual(&space.zero(), &r), 0.0);
    }

    #[test]
    fn relation_rejects_non_composable_paths() {
        let q = Quiver::a2();
        assert!(Relation::new(&q, "bad", vec![(c(1.0), vec![0, 0])]).is_err());
    }

    #[test]
    fn cycle_trace_examples() {
        let space = jordan2();
        let q = space.quiver().clone();
        let w = CycleWord::new(&q, "x", vec![0]).unwrap();
        let x = Representation { blocks: vec![CMat::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(3.)])] };
        assert_eq!(space.cycle_trace(&x, &w).unwrap(), c(4.0));

        let q2 = Quiver::new(
            vec!["1".into(), "2".into()],
            vec![Edge { name: "a".into(), tail: 0, head: 1 }, Edge { name: "b".into(), tail: 1, head: 0 }],
        )
        .unwrap();
        let s2 = RepSpace::new(q2.clone(), DimensionVector::new(vec![1, 1])).unwrap();
        let w = CycleWord::new(&q2, "ab", vec![0, 1]).unwrap();
        let x = Representation { blocks: vec![CMat::from_element(1, 1, c(2.)), CMat::from_element(1, 1, c(5.))] };
        assert_eq!(s2.cycle_trace(&x, &w).unwrap(), c(10.0));

        assert!(CycleWord::new(&q2, "open", vec![0]).is_err());
    }

    #[test]
    fn cycle_trace_is_invariant_under_action() {
        let q = Quiver::jordan(2);
        let space = RepSpace::new(q.clone(), DimensionVector::new(vec![3])).unwrap();
        let w = CycleWord::new(&q, "xyx", vec![0, 1, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = space.random(&mut rng, 1.0);
            let g = GroupElement::random_near_identity(space.dims(), &mut rng, 0.4);
            let before = space.cycle_trace(&x, &w).unwrap();
            let after = space.cycle_trace(&space.act(&g, &x).unwrap(), &w).unwrap();
            assert!((before - after).norm() < 1e-12 * (1.0 + before.norm()));
        }
    }

    #[test]
    fn flatten_roundtrip_and_inner_product() {
        let space = RepSpace::new(Quiver::a2(), DimensionVector::new(vec![2, 3])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = space.random(&mut rng, 1.0);
        let y = space.random(&mut rng, 1.0);
        let fx = space.flatten(&x);
        assert_eq!(fx.len(), space.real_dim());
        assert_eq!(space.unflatten(&fx), x);
        assert!((linalg::dot(&fx, &space.flatten(&y)) - x.inner(&y)).abs() < 1e-12);
    }
}
