//! Harmonic analysis on the supported deck groups.
//!
//! Irreducible unitary representations are parametrized as follows:
//!
//! | family | dual point | `Λ` |
//! |--------|-----------|-----|
//! | `ℤ_{n1} × … × ℤ_{nk}` | `k_j ∈ {0..n_j−1}` | `exp(2πi Σ k_j m_j / n_j)` |
//! | `ℤ^d` | `θ ∈ [0, 2π)^d` | `exp(i θ·m)` |
//! | Klein bottle | `(α, β) ∈ (0, π) × [0, 2π)` | `Λ(a) = diag(e^{iα}, e^{−iα})`, `Λ(b) = [[0, e^{iβ}], [1, 0]]` |
//!
//! The Klein-bottle matrices are the representations induced from the
//! characters `a ↦ e^{iα}, b² ↦ e^{iβ}` of the index-2 subgroup `⟨a, b²⟩`.
//! The one-dimensional families at `α ∈ {0, π}` are Plancherel-null and are
//! not part of the quadrature.
//!
//! Plancherel quadrature ([`DualGrid`]) uses weights `d_Λ/|Γ|` on finite
//! groups and the midpoint rule on the tori `[0, 2π)^d` (weight `M^{−d}`)
//! and on `(0, π) × [0, 2π)` with density `dα dβ / 4π²` for the Klein
//! bottle. The midpoint rule integrates every trigonometric polynomial of
//! low enough degree exactly, so transforms of functions supported in the
//! ball of radius [`DualGrid::exactness_radius`] are exact.

use crate::group::{GroupElement, GroupError, GroupFamily, GroupSpec};
use crate::linalg::{axpy, frobenius, max_abs, trace_adjoint_product};
use crate::{CMatrix, Defect, Flags, C64};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("dual parameters {params} are outside the dual domain of {group}: {reason}")]
    OutsideDual {
        params: String,
        group: String,
        reason: String,
    },
    #[error("alpha = {alpha} lies on a one-dimensional boundary family (Plancherel measure zero)")]
    BoundaryFamily { alpha: f64 },
    #[error("dual resolution must be at least 1")]
    ZeroResolution,
    #[error("dual field has {found} nodes, grid has {expected}")]
    NodeCount { expected: usize, found: usize },
    #[error("node {node}: matrix is {rows}x{cols}, irrep dimension is {dim}")]
    ShapeMismatch {
        node: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
}

/// Coordinates of a point of the dual space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DualPoint {
    /// Character labels `k_j` for a finite abelian group.
    Characters(Vec<u32>),
    /// Quasi-momenta for `ℤ^d`.
    Torus(Vec<f64>),
    /// Induced-representation parameters for the Klein-bottle group.
    Klein { alpha: f64, beta: f64 },
}

impl DualPoint {
    pub fn as_vec(&self) -> Vec<f64> {
        match self {
            DualPoint::Characters(ks) => ks.iter().map(|&k| k as f64).collect(),
            DualPoint::Torus(t) => t.clone(),
            DualPoint::Klein { alpha, beta } => vec![*alpha, *beta],
        }
    }
}

/// An irreducible unitary representation, evaluated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Irrep {
    spec: GroupSpec,
    point: DualPoint,
}

/// Constructs the irrep at the given dual point after validating it.
pub fn irrep_at(spec: &GroupSpec, point: DualPoint) -> Result<Irrep, HarmonicError> {
    let outside = |reason: &str| HarmonicError::OutsideDual {
        params: format!("{point:?}"),
        group: spec.description().to_string(),
        reason: reason.to_string(),
    };
    match (spec.family(), &point) {
        (GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_), DualPoint::Characters(ks)) => {
            let ns = spec.finite_orders().unwrap_or(&[]);
            if ks.len() != ns.len() {
                return Err(outside("wrong number of character labels"));
            }
            if ks.iter().zip(ns).any(|(k, n)| k >= n) {
                return Err(outside("character label not reduced"));
            }
        }
        (GroupFamily::FreeAbelian(d), DualPoint::Torus(theta)) => {
            if theta.len() != *d {
                return Err(outside("wrong number of quasi-momenta"));
            }
            if theta.iter().any(|t| !(t.is_finite() && (0.0..2.0 * PI).contains(t))) {
                return Err(outside("quasi-momentum not in [0, 2pi)"));
            }
        }
        (GroupFamily::KleinBottle, DualPoint::Klein { alpha, beta }) => {
            if !alpha.is_finite() || !beta.is_finite() {
                return Err(outside("non-finite parameter"));
            }
            if *alpha == 0.0 || *alpha == PI {
                return Err(HarmonicError::BoundaryFamily { alpha: *alpha });
            }
            if !(0.0 < *alpha && *alpha < PI) {
                return Err(outside("alpha not in (0, pi)"));
            }
            if !(0.0..2.0 * PI).contains(beta) {
                return Err(outside("beta not in [0, 2pi)"));
            }
        }
        _ => return Err(outside("parameter kind does not match the group family")),
    }
    Ok(Irrep {
        spec: spec.clone(),
        point,
    })
}

impl Irrep {
    /// Trivial one-dimensional representation. Not available for the Klein
    /// bottle, whose trivial character is Plancherel-null.
    pub fn trivial(spec: &GroupSpec) -> Result<Irrep, HarmonicError> {
        let point = match spec.family() {
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
                DualPoint::Characters(vec![0; spec.rank()])
            }
            GroupFamily::FreeAbelian(d) => DualPoint::Torus(vec![0.0; *d]),
            GroupFamily::KleinBottle => return Err(HarmonicError::BoundaryFamily { alpha: 0.0 }),
        };
        irrep_at(spec, point)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn point(&self) -> &DualPoint {
        &self.point
    }

    pub fn dim(&self) -> usize {
        match self.point {
            DualPoint::Klein { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_trivial(&self) -> bool {
        match &self.point {
            DualPoint::Characters(ks) => ks.iter().all(|&k| k == 0),
            DualPoint::Torus(t) => t.iter().all(|&x| x == 0.0),
            DualPoint::Klein { .. } => false,
        }
    }

    pub fn evaluate(&self, s: &GroupElement) -> Result<CMatrix, HarmonicError> {
        self.spec.check(s)?;
        Ok(self.eval(s))
    }

    /// Evaluation without membership check; callers validate elements once.
    pub(crate) fn eval(&self, s: &GroupElement) -> CMatrix {
        match &self.point {
            DualPoint::Characters(ks) => {
                let ns = self.spec.finite_orders().unwrap_or(&[]);
                let phase: f64 = ks
                    .iter()
                    .zip(ns)
                    .zip(s.coords())
                    .map(|((&k, &n), &m)| {
                        // reduce k·m mod n before dividing to keep phases exact
                        let km = (k as i64 * m).rem_euclid(n as i64);
                        2.0 * PI * km as f64 / n as f64
                    })
                    .sum();
                CMatrix::from_element(1, 1, C64::cis(phase))
            }
            DualPoint::Torus(theta) => {
                let phase: f64 = theta.iter().zip(s.coords()).map(|(t, &m)| t * m as f64).sum();
                CMatrix::from_element(1, 1, C64::cis(phase))
            }
            DualPoint::Klein { alpha, beta } => {
                // a^m b^n with n = 2q + r: Λ(a^m) Λ(b)^r e^{iqβ}
                let (m, n) = (s.coords()[0], s.coords()[1]);
                let q = n.div_euclid(2);
                let r = n.rem_euclid(2);
                let pa = C64::cis(alpha * m as f64);
                let pb = C64::cis(beta * q as f64);
                let zero = C64::new(0.0, 0.0);
                if r == 0 {
                    CMatrix::from_row_slice(2, 2, &[pa * pb, zero, zero, pa.conj() * pb])
                } else {
                    let eb = C64::cis(*beta);
                    CMatrix::from_row_slice(2, 2, &[zero, pa * eb * pb, pa.conj() * pb, zero])
                }
            }
        }
    }

    /// Max-entry defect of `Λ(e) = 1`, `Λ(sr) = Λ(s)Λ(r)` and
    /// `Λ(s⁻¹) = Λ(s)*` over all pairs from `elements`.
    pub fn homomorphism_defect(&self, elements: &[GroupElement]) -> Result<f64, HarmonicError> {
        for s in elements {
            self.spec.check(s)?;
        }
        let id = CMatrix::identity(self.dim(), self.dim());
        let mut worst = max_abs(&(self.eval(&self.spec.identity()) - &id));
        let values: Vec<CMatrix> = elements.iter().map(|s| self.eval(s)).collect();
        for (s, ls) in elements.iter().zip(&values) {
            let inv = self.eval(&self.spec.inv_unchecked(s));
            worst = worst.max(max_abs(&(inv - ls.adjoint())));
            worst = worst.max(max_abs(&(ls * ls.adjoint() - &id)));
            for (r, lr) in elements.iter().zip(&values) {
                let prod = self.eval(&self.spec.mul_unchecked(s, r));
                worst = worst.max(max_abs(&(prod - ls * lr)));
            }
        }
        Ok(worst)
    }
}

/// A quadrature node of the dual space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNode {
    pub irrep: Irrep,
    pub weight: f64,
}

/// Quadrature nodes and Plancherel weights on the dual space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGrid {
    spec: GroupSpec,
    resolution: usize,
    nodes: Vec<DualNode>,
}

/// Builds the Plancherel quadrature of the given resolution `M`. Finite
/// groups ignore `M` and list every character.
pub fn dual_grid(spec: &GroupSpec, resolution: usize) -> Result<DualGrid, HarmonicError> {
    if resolution == 0 {
        return Err(HarmonicError::ZeroResolution);
    }
    let mut nodes = Vec::new();
    match spec.family() {
        GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
            let ns = spec.finite_orders().unwrap_or(&[]).to_vec();
            let order = spec.order().unwrap_or(1) as f64;
            for labels in odometer(&ns.iter().map(|&n| n as usize).collect::<Vec<_>>()) {
                let ks = labels.iter().map(|&k| k as u32).collect();
                nodes.push(DualNode {
                    irrep: irrep_at(spec, DualPoint::Characters(ks))?,
                    weight: 1.0 / order,
                });
            }
        }
        GroupFamily::FreeAbelian(d) => {
            let weight = (resolution as f64).powi(-(*d as i32));
            for labels in odometer(&vec![resolution; *d]) {
                let theta = labels
                    .iter()
                    .map(|&j| 2.0 * PI * (j as f64 + 0.5) / resolution as f64)
                    .collect();
                nodes.push(DualNode {
                    irrep: irrep_at(spec, DualPoint::Torus(theta))?,
                    weight,
                });
            }
        }
        GroupFamily::KleinBottle => {
            let m = resolution as f64;
            // (π/M)(2π/M) / (4π²)
            let weight = 1.0 / (2.0 * m * m);
            for i in 0..resolution {
                for j in 0..resolution {
                    let alpha = PI * (i as f64 + 0.5) / m;
                    let beta = 2.0 * PI * (j as f64 + 0.5) / m;
                    nodes.push(DualNode {
                        irrep: irrep_at(spec, DualPoint::Klein { alpha, beta })?,
                        weight,
                    });
                }
            }
        }
    }
    Ok(DualGrid {
        spec: spec.clone(),
        resolution,
        nodes,
    })
}

fn odometer(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if sizes.contains(&0) {
        return out;
    }
    let mut idx = vec![0usize; sizes.len()];
    loop {
        out.push(idx.clone());
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

impl DualGrid {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn nodes(&self) -> &[DualNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `m̂(Γ̂)` as seen by the quadrature.
    pub fn total_mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// `∫ dim 𝓛_Λ dm̂(Λ)`, which must equal 1.
    pub fn plancherel_sum(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight * n.irrep.dim() as f64).sum()
    }

    /// Support radius up to which Fourier inversion and Parseval are exact;
    /// `None` means unlimited (finite groups).
    pub fn exactness_radius(&self) -> Option<u64> {
        match self.spec.family() {
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => None,
            GroupFamily::FreeAbelian(_) => Some((self.resolution as u64 - 1) / 2),
            GroupFamily::KleinBottle => Some(self.resolution as u64 - 1),
        }
    }

    pub fn within_band(&self, radius: u64) -> bool {
        self.exactness_radius().is_none_or(|r| radius <= r)
    }

    /// `Λ(s)` at every node.
    pub fn evaluate_all(&self, s: &GroupElement) -> Result<Vec<CMatrix>, HarmonicError> {
        self.spec.check(s)?;
        Ok(self.nodes.iter().map(|n| n.irrep.eval(s)).collect())
    }

    pub fn manifest(&self) -> DualGridManifest {
        DualGridManifest {
            family: self.spec.family().to_string(),
            resolution: self.resolution,
            node_count: self.nodes.len(),
            total_mass: self.total_mass(),
            plancherel_sum: self.plancherel_sum(),
            exactness_radius: self.exactness_radius().map(|r| r as i64).unwrap_or(-1),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(index, n)| ManifestNode {
                    index,
                    params: n.irrep.point.as_vec(),
                    dim: n.irrep.dim(),
                    weight: n.weight,
                })
                .collect(),
        }
    }
}

/// Serializable description of a [`DualGrid`].
#[derive(Debug, Clone, Serialize)]
pub struct DualGridManifest {
    pub family: String,
    pub resolution: usize,
    pub node_count: usize,
    pub total_mass: f64,
    pub plancherel_sum: f64,
    /// `-1` when unlimited.
    pub exactness_radius: i64,
    pub nodes: Vec<ManifestNode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestNode {
    pub index: usize,
    pub params: Vec<f64>,
    pub dim: usize,
    pub weight: f64,
}

/// Finitely supported function on the group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupFunction {
    values: BTreeMap<GroupElement, C64>,
}

impl GroupFunction {
    pub fn zero() -> Self {
        GroupFunction::default()
    }

    pub fn delta(g: GroupElement) -> Self {
        let mut f = GroupFunction::zero();
        f.set(g, C64::new(1.0, 0.0));
        f
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (GroupElement, C64)>) -> Self {
        let mut f = GroupFunction::zero();
        for (g, v) in pairs {
            f.add(g, v);
        }
        f
    }

    pub fn set(&mut self, g: GroupElement, v: C64) {
        self.values.insert(g, v);
    }

    pub fn add(&mut self, g: GroupElement, v: C64) {
        *self.values.entry(g).or_insert(C64::new(0.0, 0.0)) += v;
    }

    pub fn get(&self, g: &GroupElement) -> C64 {
        self.values.get(g).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, &C64)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.values().map(|v| v.norm_sqr()).sum()
    }

    /// Largest group norm among stored elements with nonzero value.
    pub fn support_radius(&self, spec: &GroupSpec) -> u64 {
        self.values
            .iter()
            .filter(|(_, v)| **v != C64::new(0.0, 0.0))
            .map(|(g, _)| spec.norm(g))
            .max()
            .unwrap_or(0)
    }

    /// `Σ_s |f(s) − g(s)|²` over the union of supports.
    pub fn distance_sqr(&self, other: &GroupFunction) -> f64 {
        let mut total = 0.0;
        for (g, v) in &self.values {
            total += (v - other.get(g)).norm_sqr();
        }
        for (g, v) in &other.values {
            if !self.values.contains_key(g) {
                total += v.norm_sqr();
            }
        }
        total
    }

    /// `(L_s* f)(r) = f(s·r)`.
    pub fn left_pullback(&self, spec: &GroupSpec, s: &GroupElement) -> Result<GroupFunction, HarmonicError> {
        spec.check(s)?;
        let s_inv = spec.inv_unchecked(s);
        let mut out = GroupFunction::zero();
        for (g, v) in &self.values {
            spec.check(g)?;
            out.set(spec.mul_unchecked(&s_inv, g), *v);
        }
        Ok(out)
    }
}

/// Matrix-valued function on the dual grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    values: Vec<CMatrix>,
}

impl DualField {
    pub fn new(grid: &DualGrid, values: Vec<CMatrix>) -> Result<Self, HarmonicError> {
        check_shapes(grid, &values)?;
        Ok(DualField { values })
    }

    pub fn zeros(grid: &DualGrid) -> Self {
        DualField {
            values: grid
                .nodes
                .iter()
                .map(|n| CMatrix::zeros(n.irrep.dim(), n.irrep.dim()))
                .collect(),
        }
    }

    /// `Λ ↦ Λ(g)` sampled on the grid.
    pub fn of_element(grid: &DualGrid, g: &GroupElement) -> Result<Self, HarmonicError> {
        Ok(DualField {
            values: grid.evaluate_all(g)?,
        })
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn into_values(self) -> Vec<CMatrix> {
        self.values
    }

    /// `∫ ‖F(Λ)‖²_HS dm̂(Λ)`.
    pub fn norm_sqr(&self, grid: &DualGrid) -> f64 {
        self.values
            .iter()
            .zip(&grid.nodes)
            .map(|(m, n)| n.weight * frobenius(m).powi(2))
            .sum()
    }

    /// Largest Hilbert-Schmidt norm of `F(Λ) − G(Λ)` over the nodes.
    pub fn max_node_distance(&self, other: &DualField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| frobenius(&(a - b)))
            .fold(0.0, f64::max)
    }
}

fn check_shapes(grid: &DualGrid, values: &[CMatrix]) -> Result<(), HarmonicError> {
    if values.len() != grid.len() {
        return Err(HarmonicError::NodeCount {
            expected: grid.len(),
            found: values.len(),
        });
    }
    for (i, (m, n)) in values.iter().zip(&grid.nodes).enumerate() {
        let d = n.irrep.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(HarmonicError::ShapeMismatch {
                node: i,
                rows: m.nrows(),
                cols: m.ncols(),
                dim: d,
            });
        }
    }
    Ok(())
}

/// `𝓕[f](Λ) = Σ_s f(s) Λ(s)` at every grid node.
pub fn fourier(f: &GroupFunction, grid: &DualGrid) -> Result<DualField, HarmonicError> {
    for (g, _) in f.iter() {
        grid.spec.check(g)?;
    }
    let values = grid
        .nodes
        .par_iter()
        .map(|node| {
            let d = node.irrep.dim();
            let mut acc = CMatrix::zeros(d, d);
            for (g, v) in f.iter() {
                axpy(&mut acc, *v, &node.irrep.eval(g));
            }
            acc
        })
        .collect();
    Ok(DualField { values })
}

/// `f(s) = ∫ Tr[Λ(s)* F(Λ)] dm̂(Λ)` on the requested support.
pub fn inverse_fourier(
    field: &DualField,
    grid: &DualGrid,
    support: &[GroupElement],
) -> Result<GroupFunction, HarmonicError> {
    check_shapes(grid, &field.values)?;
    for s in support {
        grid.spec.check(s)?;
    }
    let values: Vec<C64> = support
        .par_iter()
        .map(|s| {
            grid.nodes
                .iter()
                .zip(&field.values)
                .map(|(node, fv)| trace_adjoint_product(&node.irrep.eval(s), fv) * node.weight)
                .sum()
        })
        .collect();
    Ok(GroupFunction::from_pairs(support.iter().cloned().zip(values)))
}

fn band_flags(grid: &DualGrid, fs: &[&GroupFunction]) -> Flags {
    let radius = fs
        .iter()
        .map(|f| f.support_radius(&grid.spec))
        .max()
        .unwrap_or(0);
    if grid.within_band(radius) {
        Flags::NONE
    } else {
        Flags::band()
    }
}

/// `|Σ_s conj(f1(s)) f2(s) − ∫ Tr[f̂1(Λ)* f̂2(Λ)] dm̂(Λ)|`.
pub fn parseval_defect(
    f1: &GroupFunction,
    f2: &GroupFunction,
    grid: &DualGrid,
) -> Result<Defect, HarmonicError> {
    let lhs: C64 = f1.iter().map(|(g, v)| v.conj() * f2.get(g)).sum();
    let h1 = fourier(f1, grid)?;
    let h2 = fourier(f2, grid)?;
    let rhs: C64 = grid
        .nodes
        .iter()
        .zip(h1.values.iter().zip(&h2.values))
        .map(|(n, (a, b))| trace_adjoint_product(a, b) * n.weight)
        .sum();
    Ok(Defect::new((lhs - rhs).norm(), lhs.norm(), rhs.norm()).with_flags(band_flags(grid, &[f1, f2])))
}

/// Max-node norm of `𝓕[L_s* f](Λ) − Λ(s⁻¹) 𝓕[f](Λ)`.
pub fn regular_rep_defect(
    f: &GroupFunction,
    s: &GroupElement,
    grid: &DualGrid,
) -> Result<Defect, HarmonicError> {
    let shifted = f.left_pullback(&grid.spec, s)?;
    let lhs = fourier(&shifted, grid)?;
    let base = fourier(f, grid)?;
    let s_inv = grid.spec.inv_unchecked(s);
    let rhs: Vec<CMatrix> = grid
        .nodes
        .iter()
        .zip(&base.values)
        .map(|(n, b)| n.irrep.eval(&s_inv) * b)
        .collect();
    let rhs = DualField { values: rhs };
    Ok(Defect::new(
        lhs.max_node_distance(&rhs),
        lhs.norm_sqr(grid).sqrt(),
        rhs.norm_sqr(grid).sqrt(),
    ))
}

/// `‖𝓕⁻¹𝓕 f − f‖` on the support of `f`, with the band flag.
pub fn roundtrip_defect(f: &GroupFunction, grid: &DualGrid) -> Result<Defect, HarmonicError> {
    let support: Vec<GroupElement> = f.iter().map(|(g, _)| g.clone()).collect();
    let back = inverse_fourier(&fourier(f, grid)?, grid, &support)?;
    Ok(Defect::new(
        back.distance_sqr(f).sqrt(),
        back.norm_sqr().sqrt(),
        f.norm_sqr().sqrt(),
    )
    .with_flags(band_flags(grid, &[f])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sign_character() {
        let z2 = GroupSpec::cyclic(2).unwrap();
        let sign = irrep_at(&z2, DualPoint::Characters(vec![1])).unwrap();
        let one = z2.element(&[1]).unwrap();
        assert!((sign.evaluate(&one).unwrap()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn klein_b_squared() {
        let k = GroupSpec::klein_bottle();
        let (alpha, beta) = (0.7, 2.3);
        let lam = irrep_at(&k, DualPoint::Klein { alpha, beta }).unwrap();
        let lb = lam.evaluate(&k.klein_b()).unwrap();
        let b2 = k.element(&[0, 2]).unwrap();
        let sq = &lb * &lb;
        let expected = CMatrix::identity(2, 2) * C64::cis(beta);
        assert!(max_abs(&(&sq - &expected)) < 1e-15);
        assert!(max_abs(&(lam.evaluate(&b2).unwrap() - &sq)) < 1e-15);
    }

    #[test]
    fn torus_character_power() {
        let z = GroupSpec::free_abelian(1).unwrap();
        let lam = irrep_at(&z, DualPoint::Torus(vec![PI / 2.0])).unwrap();
        let v = lam.evaluate(&z.element(&[3]).unwrap()).unwrap()[(0, 0)];
        assert!((v - C64::cis(1.5 * PI)).norm() < 1e-15);
    }

    #[test]
    fn boundary_family_rejected() {
        let k = GroupSpec::klein_bottle();
        for alpha in [0.0, PI] {
            let err = irrep_at(&k, DualPoint::Klein { alpha, beta: 1.0 }).unwrap_err();
            assert!(matches!(err, HarmonicError::BoundaryFamily { .. }));
        }
        assert!(irrep_at(&k, DualPoint::Klein { alpha: 4.0, beta: 1.0 }).is_err());
        let z = GroupSpec::free_abelian(1).unwrap();
        assert!(irrep_at(&z, DualPoint::Torus(vec![7.0])).is_err());
        assert!(irrep_at(&z, DualPoint::Characters(vec![0])).is_err());
    }

    #[test]
    fn klein_relation_in_representation() {
        let k = GroupSpec::klein_bottle();
        let lam = irrep_at(&k, DualPoint::Klein { alpha: 1.1, beta: 0.4 }).unwrap();
        let a = lam.evaluate(&k.klein_a()).unwrap();
        let b = lam.evaluate(&k.klein_b()).unwrap();
        let binv = b.clone().try_inverse().unwrap();
        let a_inv = a.adjoint();
        assert!(max_abs(&(&b * &a * &binv - a_inv)) < 1e-15);
    }

    #[test]
    fn grids_have_expected_weights() {
        let z4 = dual_grid(&GroupSpec::cyclic(4).unwrap(), 1).unwrap();
        assert_eq!(z4.len(), 4);
        assert!(z4.nodes().iter().all(|n| n.weight == 0.25));
        assert!((z4.plancherel_sum() - 1.0).abs() < 1e-15);

        let z = dual_grid(&GroupSpec::free_abelian(1).unwrap(), 8).unwrap();
        assert_eq!(z.len(), 8);
        assert!(z.nodes().iter().all(|n| n.weight == 0.125));
        assert!((z.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(z.exactness_radius(), Some(3));

        for m in [1, 4, 7, 16] {
            let k = dual_grid(&GroupSpec::klein_bottle(), m).unwrap();
            assert!((k.plancherel_sum() - 1.0).abs() < 1e-14);
            assert!((k.total_mass() - 0.5).abs() < 1e-14);
        }
        assert!(dual_grid(&GroupSpec::klein_bottle(), 0).is_err());
    }

    #[test]
    fn fourier_of_delta() {
        let k = GroupSpec::klein_bottle();
        let grid = dual_grid(&k, 4).unwrap();
        let g = k.element(&[2, -1]).unwrap();
        let f = fourier(&GroupFunction::delta(g.clone()), &grid).unwrap();
        let expected = DualField::of_element(&grid, &g).unwrap();
        assert!(f.max_node_distance(&expected) < 1e-15);

        let e = fourier(&GroupFunction::delta(k.identity()), &grid).unwrap();
        for v in e.values() {
            assert!(max_abs(&(v - CMatrix::identity(2, 2))) < 1e-15);
        }
    }

    #[test]
    fn two_term_sum_on_integers() {
        let z = GroupSpec::free_abelian(1).unwrap();
        let grid = dual_grid(&z, 5).unwrap();
        let f = GroupFunction::from_pairs([
            (z.element(&[0]).unwrap(), c(1.0, 0.0)),
            (z.element(&[1]).unwrap(), c(1.0, 0.0)),
        ]);
        let hat = fourier(&f, &grid).unwrap();
        for (node, v) in grid.nodes().iter().zip(hat.values()) {
            let DualPoint::Torus(t) = node.irrep.point() else { unreachable!() };
            assert!((v[(0, 0)] - (c(1.0, 0.0) + C64::cis(t[0]))).norm() < 1e-15);
        }
    }

    #[test]
    fn inverse_of_constant_field_is_delta() {
        let z = GroupSpec::free_abelian(1).unwrap();
        let grid = dual_grid(&z, 8).unwrap();
        let ones = DualField::new(&grid, vec![CMatrix::identity(1, 1); 8]).unwrap();
        let support = z.enumerate_ball(3);
        let f = inverse_fourier(&ones, &grid, &support).unwrap();
        for s in &support {
            let expected = if *s == z.identity() { 1.0 } else { 0.0 };
            assert!((f.get(s) - c(expected, 0.0)).norm() < 1e-15);
        }
        let zero = inverse_fourier(&DualField::zeros(&grid), &grid, &support).unwrap();
        assert_eq!(zero.norm_sqr(), 0.0);
    }

    #[test]
    fn inverse_recovers_delta_on_finite_group() {
        let g = GroupSpec::product(&[2, 3]).unwrap();
        let grid = dual_grid(&g, 1).unwrap();
        let target = g.element(&[1, 2]).unwrap();
        let field = DualField::of_element(&grid, &target).unwrap();
        let all = g.enumerate_ball(10);
        let f = inverse_fourier(&field, &grid, &all).unwrap();
        for s in &all {
            let expected = if *s == target { 1.0 } else { 0.0 };
            assert!((f.get(s) - c(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn parseval_on_klein_deltas() {
        let k = GroupSpec::klein_bottle();
        let grid = dual_grid(&k, 8).unwrap();
        let e = GroupFunction::delta(k.identity());
        let a = GroupFunction::delta(k.klein_a());
        let b = GroupFunction::delta(k.klein_b());
        let d = parseval_defect(&e, &e, &grid).unwrap();
        assert!(d.value < 1e-14 && (d.rhs_norm - 1.0).abs() < 1e-14);
        let d = parseval_defect(&e, &a, &grid).unwrap();
        assert!(d.value < 1e-14 && d.lhs_norm == 0.0);
        let d = parseval_defect(&a, &b, &grid).unwrap();
        assert!(d.value < 1e-14);
        let zero = GroupFunction::zero();
        assert_eq!(parseval_defect(&zero, &zero, &grid).unwrap().value, 0.0);
    }

    #[test]
    fn band_flag_raised_outside_band() {
        let z = GroupSpec::free_abelian(1).unwrap();
        let grid = dual_grid(&z, 4).unwrap();
        let f = GroupFunction::from_pairs(
            z.enumerate_ball(3).into_iter().map(|s| (s, c(1.0, 0.5))),
        );
        let d = parseval_defect(&f, &f, &grid).unwrap();
        assert!(d.flags.band_exceeded);
        let inside = GroupFunction::delta(z.identity());
        assert!(!parseval_defect(&inside, &inside, &grid).unwrap().flags.band_exceeded);
    }

    #[test]
    fn regular_representation_on_delta() {
        let k = GroupSpec::klein_bottle();
        let grid = dual_grid(&k, 3).unwrap();
        let f = GroupFunction::delta(k.element(&[1, 1]).unwrap());
        for s in k.enumerate_ball(1) {
            assert!(regular_rep_defect(&f, &s, &grid).unwrap().value < 1e-14);
        }
    }
}
