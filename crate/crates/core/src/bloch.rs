//! The generalized Bloch transform
//! `Φ[f](Λ)(y) = 𝓕[f_y](Λ)` with orbit sections `f_y(s) = f(s⁻¹·y)`,
//! its inverse, and defect diagnostics for unitarity and for the
//! decomposition of invariant operators into twisted ones.
//!
//! With vertices written `(c, y)` this reads
//! `Φ[f](Λ)(y) = Σ_c f(c, y) Λ(c⁻¹)` and the inverse is
//! `f(c, y) = ∫ Tr[Λ(c) Φ[f](Λ)(y)] dm̂(Λ)`.
//!
//! At each dual node the field is stored as an `(|D|·d) × d` matrix whose
//! `y`-th block row is `Φ[f](Λ)(y)`; its `k`-th column is the section
//! `Φ_Λ(f ⊗ e_k)`.

use crate::covering::{CoveringError, CoveringFunction, CoveringGraph};
use crate::harmonic::{DualGrid, GroupFunction, HarmonicError};
use crate::linalg::{frobenius, max_abs};
use crate::operators::{InvariantHamiltonian, KernelTime, OperatorError, Potential, TwistedHamiltonian};
use crate::{CMatrix, Defect, Flagged, Flags, C64};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("dual grid and covering graph belong to different groups")]
    GroupMismatch,
    #[error("field does not match the grid: {0}")]
    Shape(String),
    #[error("{0} is only defined for finite groups")]
    NeedsFiniteGroup(&'static str),
}

/// `Φ[f]` sampled on the nodes of a dual grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochField {
    base_len: usize,
    nodes: Vec<CMatrix>,
}

impl BlochField {
    pub fn zeros(graph: &CoveringGraph, grid: &DualGrid) -> Self {
        BlochField {
            base_len: graph.base_len(),
            nodes: grid
                .nodes()
                .iter()
                .map(|n| {
                    let d = n.irrep.dim();
                    CMatrix::zeros(graph.base_len() * d, d)
                })
                .collect(),
        }
    }

    /// Field from per-node `(|D|·d) × d` matrices.
    pub fn from_nodes(graph: &CoveringGraph, grid: &DualGrid, nodes: Vec<CMatrix>) -> Result<Self, BlochError> {
        let field = BlochField {
            base_len: graph.base_len(),
            nodes,
        };
        field.check(graph, grid)?;
        Ok(field)
    }

    pub fn nodes(&self) -> &[CMatrix] {
        &self.nodes
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// `Φ[f](Λ_node)(y)` as a `d × d` matrix.
    pub fn block(&self, node: usize, y: usize) -> CMatrix {
        let d = self.nodes[node].ncols();
        self.nodes[node].view((y * d, 0), (d, d)).into_owned()
    }

    /// `Σ_nodes w Σ_y μ(y) ‖Φ[f](Λ)(y)‖²_HS`.
    pub fn norm_sqr(&self, graph: &CoveringGraph, grid: &DualGrid) -> f64 {
        self.nodes
            .iter()
            .zip(grid.nodes())
            .map(|(m, node)| node.weight * weighted_hs_sqr(m, graph))
            .sum()
    }

    /// Direct-integral distance to another field.
    pub fn distance(&self, other: &BlochField, graph: &CoveringGraph, grid: &DualGrid) -> f64 {
        self.nodes
            .iter()
            .zip(&other.nodes)
            .zip(grid.nodes())
            .map(|((a, b), node)| node.weight * weighted_hs_sqr(&(a - b), graph))
            .sum::<f64>()
            .sqrt()
    }

    fn check(&self, graph: &CoveringGraph, grid: &DualGrid) -> Result<(), BlochError> {
        if grid.spec() != graph.spec() {
            return Err(BlochError::GroupMismatch);
        }
        if self.base_len != graph.base_len() || self.nodes.len() != grid.len() {
            return Err(BlochError::Shape(format!(
                "{} nodes over {} base points, expected {} over {}",
                self.nodes.len(),
                self.base_len,
                grid.len(),
                graph.base_len()
            )));
        }
        for (i, (m, node)) in self.nodes.iter().zip(grid.nodes()).enumerate() {
            let d = node.irrep.dim();
            if m.nrows() != self.base_len * d || m.ncols() != d {
                return Err(BlochError::Shape(format!(
                    "node {i} holds a {}x{} matrix, expected {}x{d}",
                    m.nrows(),
                    m.ncols(),
                    self.base_len * d
                )));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<BlochRecord> {
        let mut out = Vec::new();
        for (node, m) in self.nodes.iter().enumerate() {
            let d = m.ncols();
            for r in 0..m.nrows() {
                for col in 0..d {
                    out.push(BlochRecord {
                        node,
                        base: r / d,
                        row: r % d,
                        col,
                        re: m[(r, col)].re,
                        im: m[(r, col)].im,
                    });
                }
            }
        }
        out
    }
}

/// One CSV row of a Bloch-field export.
#[derive(Debug, Clone, Serialize)]
pub struct BlochRecord {
    pub node: usize,
    pub base: usize,
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

fn weighted_hs_sqr(m: &CMatrix, graph: &CoveringGraph) -> f64 {
    let d = m.ncols();
    (0..graph.base_len())
        .map(|y| {
            let block = m.view((y * d, 0), (d, d));
            graph.base_measure(y) * block.iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .sum()
}

fn check_pair(graph: &CoveringGraph, grid: &DualGrid) -> Result<(), BlochError> {
    if grid.spec() != graph.spec() {
        Err(BlochError::GroupMismatch)
    } else {
        Ok(())
    }
}

fn check_len(graph: &CoveringGraph, f: &CoveringFunction) -> Result<(), BlochError> {
    if f.len() != graph.vertex_count() {
        return Err(CoveringError::Length {
            expected: graph.vertex_count(),
            found: f.len(),
        }
        .into());
    }
    Ok(())
}

/// `f_y(s) = f(s⁻¹·y)` for a vertex `y = (g₀, y₀)`: the copy `(g, y₀)`
/// contributes at `s = g₀ g⁻¹`. The overflow flag is raised when the fiber
/// carries a nonzero value on the outermost shell of copies.
pub fn orbit_section(
    graph: &CoveringGraph,
    f: &CoveringFunction,
    y: usize,
) -> Result<Flagged<GroupFunction>, BlochError> {
    check_len(graph, f)?;
    graph.check_vertex(y)?;
    let spec = graph.spec();
    let g0 = graph.copy_element(y);
    let base = graph.project(y);
    let mut out = GroupFunction::zero();
    let mut flags = Flags::NONE;
    for (c, g) in graph.window().iter().enumerate() {
        let v = graph.vertex(c, base);
        let value = f.get(v);
        let s = spec.mul_unchecked(g0, &spec.inv_unchecked(g));
        out.set(s, value);
        if value != C64::new(0.0, 0.0) && graph.on_boundary(v) {
            flags = Flags::overflow();
        }
    }
    Ok(Flagged::new(out, flags))
}

/// `Λ(c⁻¹)` for every window copy at one dual node.
fn inverse_copy_matrices(graph: &CoveringGraph, irrep: &crate::harmonic::Irrep) -> Vec<CMatrix> {
    graph
        .window()
        .iter()
        .map(|g| irrep.eval(&graph.spec().inv_unchecked(g)))
        .collect()
}

/// `Φ[f](Λ)(y) = Σ_c f(c, y) Λ(c⁻¹)` at every dual node. The band flag is
/// raised when the orbit sections reach beyond the exactness radius of the
/// grid.
pub fn bloch_transform(
    graph: &CoveringGraph,
    f: &CoveringFunction,
    grid: &DualGrid,
) -> Result<Flagged<BlochField>, BlochError> {
    check_pair(graph, grid)?;
    check_len(graph, f)?;
    let n = graph.base_len();
    let nodes: Vec<CMatrix> = grid
        .nodes()
        .par_iter()
        .map(|node| {
            let d = node.irrep.dim();
            let lams = inverse_copy_matrices(graph, &node.irrep);
            let mut out = CMatrix::zeros(n * d, d);
            for (c, lam) in lams.iter().enumerate() {
                for y in 0..n {
                    let x = f.get(graph.vertex(c, y));
                    if x == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for i in 0..d {
                        for k in 0..d {
                            out[(y * d + i, k)] += x * lam[(i, k)];
                        }
                    }
                }
            }
            out
        })
        .collect();
    let radius = f.support_radius(graph);
    let flags = if grid.within_band(radius) { Flags::NONE } else { Flags::band() };
    Ok(Flagged::new(BlochField { base_len: n, nodes }, flags))
}

/// `f(c, y) = ∫ Tr[Λ(c) Φ[f](Λ)(y)] dm̂(Λ)`, i.e. the inverse Fourier
/// transform of each fiber evaluated at `c⁻¹`.
pub fn inverse_bloch(
    field: &BlochField,
    graph: &CoveringGraph,
    grid: &DualGrid,
) -> Result<CoveringFunction, BlochError> {
    field.check(graph, grid)?;
    let n = graph.base_len();
    let per_copy: Vec<Vec<C64>> = (0..graph.copy_count())
        .into_par_iter()
        .map(|c| {
            let g = &graph.window()[c];
            let mut vals = vec![C64::new(0.0, 0.0); n];
            for (node, m) in grid.nodes().iter().zip(&field.nodes) {
                let lam = node.irrep.eval(g);
                let d = node.irrep.dim();
                for (y, val) in vals.iter_mut().enumerate() {
                    let mut tr = C64::new(0.0, 0.0);
                    for i in 0..d {
                        for k in 0..d {
                            tr += lam[(i, k)] * m[(y * d + k, i)];
                        }
                    }
                    *val += tr * node.weight;
                }
            }
            vals
        })
        .collect();
    Ok(CoveringFunction::from_values(graph, per_copy.concat())?)
}

/// `|‖Φ[f]‖² − ‖f‖²|`.
pub fn unitarity_defect(
    graph: &CoveringGraph,
    f: &CoveringFunction,
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    let field = bloch_transform(graph, f, grid)?;
    let lhs = field.value.norm_sqr(graph, grid);
    let rhs = f.norm_sqr(graph);
    Ok(Defect::new((lhs - rhs).abs(), lhs, rhs).with_flags(field.flags))
}

/// `‖Φ⁻¹Φ f − f‖`.
pub fn inversion_defect(
    graph: &CoveringGraph,
    f: &CoveringFunction,
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    let field = bloch_transform(graph, f, grid)?;
    let back = inverse_bloch(&field.value, graph, grid)?;
    Ok(Defect::new(
        back.distance(f, graph),
        back.norm_sqr(graph).sqrt(),
        f.norm_sqr(graph).sqrt(),
    )
    .with_flags(field.flags))
}

/// Overflow if applying a nearest-neighbour operator to `f` would need
/// values outside the window.
fn margin_flags(graph: &CoveringGraph, f: &CoveringFunction) -> Flags {
    let violated = (0..graph.vertex_count()).any(|v| {
        f.get(v) != C64::new(0.0, 0.0) && graph.neighbors(v).any(|(u, _)| u.is_none())
    });
    if violated {
        Flags::overflow()
    } else {
        Flags::NONE
    }
}

fn check_twisted(twisted: &[TwistedHamiltonian], grid: &DualGrid) -> Result<(), BlochError> {
    if twisted.len() != grid.len() {
        return Err(BlochError::Shape(format!(
            "{} twisted operators for {} dual nodes",
            twisted.len(),
            grid.len()
        )));
    }
    for (i, (t, node)) in twisted.iter().zip(grid.nodes()).enumerate() {
        if t.irrep() != &node.irrep {
            return Err(BlochError::Shape(format!(
                "twisted operator {i} is built for a different representation"
            )));
        }
    }
    Ok(())
}

fn direct_integral_distance(
    lhs: &BlochField,
    rhs: &[CMatrix],
    graph: &CoveringGraph,
    grid: &DualGrid,
) -> Defect {
    let rhs = BlochField {
        base_len: lhs.base_len,
        nodes: rhs.to_vec(),
    };
    Defect::new(
        lhs.distance(&rhs, graph, grid),
        lhs.norm_sqr(graph, grid).sqrt(),
        rhs.norm_sqr(graph, grid).sqrt(),
    )
}

/// Direct-integral norm of `Φ[Hf] − {H_Λ Φ[f](Λ)}`.
pub fn decomposition_defect(
    h: &InvariantHamiltonian,
    twisted: &[TwistedHamiltonian],
    f: &CoveringFunction,
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    let graph = h.graph();
    check_pair(graph, grid)?;
    check_twisted(twisted, grid)?;
    check_len(graph, f)?;
    let lhs = bloch_transform(graph, &h.apply(f), grid)?;
    let phi = bloch_transform(graph, f, grid)?;
    let rhs: Vec<CMatrix> = twisted
        .par_iter()
        .zip(&phi.value.nodes)
        .map(|(t, m)| t.matrix() * m)
        .collect();
    Ok(direct_integral_distance(&lhs.value, &rhs, graph, grid)
        .with_flags(lhs.flags | phi.flags | margin_flags(graph, f)))
}

/// Direct-integral norm of `Φ[u(H) f] − {u(H_Λ) Φ[f](Λ)}` for the spectral
/// function of `time` (evolution, heat or complex time). On truncated
/// windows the flag records that `u(H)` feels the window boundary.
pub fn evolution_decomposition_defect(
    h: &InvariantHamiltonian,
    twisted: &[TwistedHamiltonian],
    f: &CoveringFunction,
    grid: &DualGrid,
    time: KernelTime,
) -> Result<Defect, BlochError> {
    let graph = h.graph();
    check_pair(graph, grid)?;
    check_twisted(twisted, grid)?;
    check_len(graph, f)?;
    time.validate()?;
    let eig = h.eigen()?;
    let u = eig.synthesize(|l| time.eval(l));
    let x = nalgebra::DVector::from_column_slice(f.values());
    let uf = CoveringFunction::from_values(graph, (&u * x).iter().copied().collect())?;
    let lhs = bloch_transform(graph, &uf, grid)?;
    let phi = bloch_transform(graph, f, grid)?;
    let rhs: Vec<CMatrix> = twisted
        .par_iter()
        .zip(&phi.value.nodes)
        .map(|(t, m)| -> Result<CMatrix, OperatorError> {
            let e = t.eigen()?;
            Ok(e.synthesize(|l| time.eval(l)) * m)
        })
        .collect::<Result<_, _>>()?;
    let truncated = if graph.spec().is_finite() { Flags::NONE } else { Flags::overflow() };
    Ok(direct_integral_distance(&lhs.value, &rhs, graph, grid)
        .with_flags(lhs.flags | phi.flags | truncated))
}

/// Direct-integral norm of `Φ[Vf] − {V Φ[f](Λ)}` for an invariant
/// potential acting fiberwise.
pub fn potential_commutation_defect(
    graph: &CoveringGraph,
    potential: &Potential,
    f: &CoveringFunction,
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    check_pair(graph, grid)?;
    check_len(graph, f)?;
    if potential.len() != graph.base_len() {
        return Err(OperatorError::InvalidPotential("length does not match the domain".into()).into());
    }
    let vf: Vec<C64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(v, x)| x * potential.values()[graph.project(v)])
        .collect();
    let lhs = bloch_transform(graph, &CoveringFunction::from_values(graph, vf)?, grid)?;
    let phi = bloch_transform(graph, f, grid)?;
    let rhs: Vec<CMatrix> = phi
        .value
        .nodes
        .iter()
        .map(|m| {
            let d = m.ncols();
            CMatrix::from_fn(m.nrows(), d, |r, k| m[(r, k)] * potential.values()[r / d])
        })
        .collect();
    Ok(direct_integral_distance(&lhs.value, &rhs, graph, grid).with_flags(lhs.flags | phi.flags))
}

/// Finite groups: largest deviation between the sorted spectrum of `H` and
/// the union of the spectra of the `H_Λ`, each repeated `d_Λ` times.
pub fn spectral_union_defect(
    h: &InvariantHamiltonian,
    twisted: &[TwistedHamiltonian],
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    if !h.graph().spec().is_finite() {
        return Err(BlochError::NeedsFiniteGroup("the spectral union"));
    }
    check_twisted(twisted, grid)?;
    let lhs = h.spectrum()?;
    let parts: Vec<Vec<f64>> = twisted
        .par_iter()
        .map(|t| t.spectrum())
        .collect::<Result<_, _>>()?;
    let mut rhs = Vec::new();
    for (p, t) in parts.iter().zip(twisted) {
        for _ in 0..t.irrep().dim() {
            rhs.extend_from_slice(p);
        }
    }
    rhs.sort_by(f64::total_cmp);
    if lhs.len() != rhs.len() {
        return Err(BlochError::Shape(format!(
            "H has {} eigenvalues, the twisted family {}",
            lhs.len(),
            rhs.len()
        )));
    }
    let worst = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(Defect::new(worst, norm(&lhs), norm(&rhs)))
}

/// Finite abelian groups: the matrix of `Φ` as a unitary `U` from
/// `ℓ²(V, μ̃)` (orthonormalized) onto `⊕_Λ ℓ²(D, μ)`, rows ordered by
/// (node, base point). Returns `max |U H U* − ⊕ H_Λ|`.
pub fn conjugation_defect(
    h: &InvariantHamiltonian,
    twisted: &[TwistedHamiltonian],
    grid: &DualGrid,
) -> Result<Defect, BlochError> {
    let graph = h.graph();
    if !graph.spec().is_finite() || grid.nodes().iter().any(|n| n.irrep.dim() != 1) {
        return Err(BlochError::NeedsFiniteGroup("the conjugated block form"));
    }
    check_twisted(twisted, grid)?;
    let n = graph.base_len();
    let nv = graph.vertex_count();
    let rows = grid.len() * n;
    if rows != nv {
        return Err(BlochError::Shape(format!("{rows} fiber rows for {nv} vertices")));
    }
    let mut u = CMatrix::zeros(rows, nv);
    for (j, node) in grid.nodes().iter().enumerate() {
        let lams = inverse_copy_matrices(graph, &node.irrep);
        for (c, lam) in lams.iter().enumerate() {
            for y in 0..n {
                let v = graph.vertex(c, y);
                // sqrt weights make both sides orthonormal coordinates
                let scale = (node.weight * graph.base_measure(y) / graph.measure(v)).sqrt();
                u[(j * n + y, v)] = lam[(0, 0)] * scale;
            }
        }
    }
    let hd = h.dense()?.map(|x| C64::new(x, 0.0));
    let conj = &u * hd * u.adjoint();
    let mut block = CMatrix::zeros(rows, rows);
    for (j, t) in twisted.iter().enumerate() {
        block.view_mut((j * n, j * n), (n, n)).copy_from(t.matrix());
    }
    let unitarity = max_abs(&(&u * u.adjoint() - CMatrix::identity(rows, rows)));
    Ok(Defect::new(
        max_abs(&(&conj - &block)).max(unitarity),
        frobenius(&conj),
        frobenius(&block),
    ))
}
