//! Discrete coverings `M̃ → M` as `Γ`-invariant weighted graphs.
//!
//! A vertex is a pair `(g, y)` of a copy `g` from the window `W ⊆ Γ` and a
//! base node `y` of the fundamental domain `D`; its id is
//! `copy_index · |D| + y`. The deck group acts by `s·(g, y) = (s g, y)`.
//!
//! Edges are stored as half-edges on `D`: a half-edge `(y → y', h, w)`
//! means that every vertex `(g, y)` is joined to `(g h, y')` with weight
//! `w`. This is exactly the data of a `Γ`-invariant graph, so invariance
//! of the metric holds by construction; truncation to the window only
//! drops the edges that leave it.
//!
//! Sections follow the convention `ψ(g, y) = Λ(g) ψ(y)`, so a section is
//! stored losslessly by its values on `D`.

use crate::defect::Flagged;
use crate::group::{ContinuumAction, GroupElement, GroupError, GroupFamily, GroupSpec};
use crate::harmonic::Irrep;
use crate::{Flags, C64};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoveringError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("invalid domain configuration: {0}")]
    Config(String),
    #[error("grid is not compatible with the {symmetry}: {detail}")]
    Incompatible { symmetry: String, detail: String },
    #[error("copy {copy} lies outside the truncation window")]
    WindowOverflow { copy: GroupElement },
    #[error("vertex {vertex} out of range (graph has {count} vertices)")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("base node {node} out of range (fundamental domain has {count} nodes)")]
    BaseOutOfRange { node: usize, count: usize },
    #[error("invalid edge orbit: {0}")]
    InvalidEdge(String),
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
    #[error("sections carry different twists")]
    TwistMismatch,
}

/// Node of the fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseNode {
    /// Continuum coordinates of the representative in copy `e`.
    pub coords: Vec<f64>,
    /// Quadrature weight `μ(y)`.
    pub measure: f64,
}

/// `(y → target, shift, weight)`: `(g, y)` is joined to `(g·shift, target)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfEdge {
    pub target: usize,
    pub shift: GroupElement,
    pub weight: f64,
}

/// Parameters of the built-in flat models.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    /// Nodes per fundamental cell along each axis (`m`).
    pub nodes_per_cell: usize,
    /// Cell length `L`; the grid spacing is `h = L/m`.
    pub cell_length: f64,
    /// Copies `s` with `‖s‖ ≤ window_radius` are kept for infinite groups;
    /// ignored for finite groups, which are never truncated.
    pub window_radius: u64,
    /// Node offset in units of `h` along each axis; empty means zero.
    pub offset: Vec<f64>,
}

impl DomainConfig {
    pub fn new(nodes_per_cell: usize, cell_length: f64, window_radius: u64) -> Self {
        DomainConfig {
            nodes_per_cell,
            cell_length,
            window_radius,
            offset: Vec::new(),
        }
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = offset;
        self
    }

    pub fn spacing(&self) -> f64 {
        self.cell_length / self.nodes_per_cell as f64
    }
}

/// Vertex count of the model `build_covering` would produce, without
/// building it.
pub fn projected_vertex_count(spec: &GroupSpec, config: &DomainConfig) -> Option<u128> {
    let m = config.nodes_per_cell as u128;
    let (dim, copies) = match spec.family() {
        GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
            (spec.rank() as u32, spec.order()? as u128)
        }
        GroupFamily::FreeAbelian(d) => {
            let side = 2 * config.window_radius as u128 + 1;
            (*d as u32, side.checked_pow(*d as u32)?)
        }
        GroupFamily::KleinBottle => {
            let side = 2 * config.window_radius as u128 + 1;
            (2, side * side)
        }
    };
    m.checked_pow(dim)?.checked_mul(copies)
}

/// A `Γ`-invariant weighted graph with a fundamental domain and a window of
/// copies.
#[derive(Debug, Clone)]
pub struct CoveringGraph {
    spec: GroupSpec,
    base: Vec<BaseNode>,
    edges: Vec<Vec<HalfEdge>>,
    window: Vec<GroupElement>,
    window_index: HashMap<GroupElement, usize>,
    window_radius: Option<u64>,
    action: Option<ContinuumAction>,
    identity_copy: usize,
}

impl CoveringGraph {
    fn assemble(
        spec: GroupSpec,
        base: Vec<BaseNode>,
        edges: Vec<Vec<HalfEdge>>,
        window_radius: Option<u64>,
        action: Option<ContinuumAction>,
    ) -> Self {
        let window = match (spec.diameter(), window_radius) {
            (Some(d), _) => spec.enumerate_ball(d),
            (None, Some(r)) => spec.enumerate_ball(r),
            (None, None) => spec.enumerate_ball(0),
        };
        let window_index: HashMap<GroupElement, usize> =
            window.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        let identity_copy = window_index[&spec.identity()];
        CoveringGraph {
            window_radius: if spec.is_finite() { None } else { window_radius.or(Some(0)) },
            spec,
            base,
            edges,
            window,
            window_index,
            action,
            identity_copy,
        }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    /// `|D|`.
    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn base_nodes(&self) -> &[BaseNode] {
        &self.base
    }

    /// Copies in the window, in a fixed order (the copy index).
    pub fn window(&self) -> &[GroupElement] {
        &self.window
    }

    /// `None` for finite groups (the window is the whole group).
    pub fn window_radius(&self) -> Option<u64> {
        self.window_radius
    }

    pub fn copy_count(&self) -> usize {
        self.window.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.window.len() * self.base.len()
    }

    pub fn identity_copy(&self) -> usize {
        self.identity_copy
    }

    pub fn copy_index(&self, g: &GroupElement) -> Option<usize> {
        self.window_index.get(g).copied()
    }

    /// Vertex id of `(window[copy], base)`.
    pub fn vertex(&self, copy: usize, base: usize) -> usize {
        copy * self.base.len() + base
    }

    /// Vertex id of `(g, base)`, or an overflow error.
    pub fn vertex_of(&self, g: &GroupElement, base: usize) -> Result<usize, CoveringError> {
        self.check_base(base)?;
        self.copy_index(g)
            .map(|c| self.vertex(c, base))
            .ok_or_else(|| CoveringError::WindowOverflow { copy: g.clone() })
    }

    /// Vertex id of the representative `(e, y)`.
    pub fn rep(&self, base: usize) -> usize {
        self.vertex(self.identity_copy, base)
    }

    pub fn copy_of(&self, v: usize) -> usize {
        v / self.base.len()
    }

    pub fn copy_element(&self, v: usize) -> &GroupElement {
        &self.window[self.copy_of(v)]
    }

    /// Projection `π: V → D`.
    pub fn project(&self, v: usize) -> usize {
        v % self.base.len()
    }

    pub fn check_vertex(&self, v: usize) -> Result<(), CoveringError> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(CoveringError::VertexOutOfRange {
                vertex: v,
                count: self.vertex_count(),
            })
        }
    }

    pub fn check_base(&self, y: usize) -> Result<(), CoveringError> {
        if y < self.base.len() {
            Ok(())
        } else {
            Err(CoveringError::BaseOutOfRange {
                node: y,
                count: self.base.len(),
            })
        }
    }

    /// `s·(g, y) = (s g, y)`.
    pub fn act(&self, s: &GroupElement, v: usize) -> Result<usize, CoveringError> {
        self.spec.check(s)?;
        self.check_vertex(v)?;
        self.act_unchecked(s, v)
    }

    pub(crate) fn act_unchecked(&self, s: &GroupElement, v: usize) -> Result<usize, CoveringError> {
        let g = self.spec.mul_unchecked(s, self.copy_element(v));
        match self.window_index.get(&g) {
            Some(&c) => Ok(self.vertex(c, self.project(v))),
            None => Err(CoveringError::WindowOverflow { copy: g }),
        }
    }

    /// Continuum coordinates of a vertex (base coordinates for abstract
    /// graphs without a geometric action).
    pub fn coords(&self, v: usize) -> Vec<f64> {
        let base = &self.base[self.project(v)].coords;
        match &self.action {
            Some(action) => action
                .act(self.copy_element(v), base)
                .unwrap_or_else(|_| base.clone()),
            None => base.clone(),
        }
    }

    pub fn continuum_action(&self) -> Option<&ContinuumAction> {
        self.action.as_ref()
    }

    /// `μ̃(v) = μ(π v)`.
    pub fn measure(&self, v: usize) -> f64 {
        self.base[self.project(v)].measure
    }

    pub fn base_measure(&self, y: usize) -> f64 {
        self.base[y].measure
    }

    pub fn edges(&self, y: usize) -> &[HalfEdge] {
        &self.edges[y]
    }

    /// Sum of the edge weights at a base node (the degree term of `−Δ`).
    pub fn degree(&self, y: usize) -> f64 {
        self.edges[y].iter().map(|e| e.weight).sum()
    }

    /// Neighbours of `v` as `(vertex, weight)`; `None` for neighbours
    /// outside the window.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (Option<usize>, f64)> + '_ {
        let g = self.copy_element(v).clone();
        self.edges[self.project(v)].iter().map(move |e| {
            let target = self.spec.mul_unchecked(&g, &e.shift);
            (
                self.window_index.get(&target).map(|&c| self.vertex(c, e.target)),
                e.weight,
            )
        })
    }

    /// Copy norm of a vertex.
    pub fn copy_norm(&self, v: usize) -> u64 {
        self.spec.norm(self.copy_element(v))
    }

    /// Vertices at least one copy away from the window boundary. Every
    /// vertex of a finite model is interior.
    pub fn is_interior(&self, v: usize) -> bool {
        match self.window_radius {
            None => true,
            Some(r) => self.copy_norm(v) < r,
        }
    }

    /// Whether the vertex lies in the outermost shell of copies.
    pub fn on_boundary(&self, v: usize) -> bool {
        !self.is_interior(v)
    }

    /// Longest shift carried by any half-edge.
    pub fn max_shift_norm(&self) -> u64 {
        self.edges
            .iter()
            .flatten()
            .map(|e| self.spec.norm(&e.shift))
            .max()
            .unwrap_or(0)
    }

    /// Checks that no `s ≠ e` from the window fixes a vertex. Returns the
    /// first offending pair.
    pub fn freeness_audit(&self) -> Result<(), (GroupElement, usize)> {
        let e = self.spec.identity();
        for s in &self.window {
            if *s == e {
                continue;
            }
            for v in 0..self.vertex_count() {
                if self.act_unchecked(s, v) == Ok(v) {
                    return Err((s.clone(), v));
                }
            }
        }
        Ok(())
    }

    /// Explicit in-window edge list `(u, v, weight)`.
    pub fn edge_list(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for u in 0..self.vertex_count() {
            for (t, w) in self.neighbors(u) {
                if let Some(t) = t {
                    out.push((u, t, w));
                }
            }
        }
        out
    }

    /// Checks edge invariance against the explicit edge list for the given
    /// group elements: every edge whose endpoints both map into the window
    /// must map to an edge of the same weight. Returns the number of
    /// violations.
    pub fn edge_invariance_audit(&self, elements: &[GroupElement]) -> Result<usize, CoveringError> {
        let list = self.edge_list();
        let mut set: HashMap<(usize, usize), f64> = HashMap::new();
        for &(u, v, w) in &list {
            *set.entry((u, v)).or_insert(0.0) += w;
        }
        let mut bad = 0;
        for s in elements {
            self.spec.check(s)?;
            for (&(u, v), &w) in &set {
                if let (Ok(su), Ok(sv)) = (self.act_unchecked(s, u), self.act_unchecked(s, v)) {
                    match set.get(&(su, sv)) {
                        Some(&w2) if w2 == w => {}
                        _ => bad += 1,
                    }
                }
            }
        }
        Ok(bad)
    }

    /// `Σ_{s∈W} f(s, y)` for each base node.
    pub fn fiber_sum(&self, f: &CoveringFunction) -> Result<Vec<C64>, CoveringError> {
        self.check_function(f)?;
        let n = self.base.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (v, val) in f.values.iter().enumerate() {
            out[v % n] += val;
        }
        Ok(out)
    }

    /// Changes the fundamental domain: the new representative of the orbit
    /// of `y` is the old vertex `(reps[y], y)`. Half-edge shifts become
    /// `reps[y] · h · reps[y']⁻¹` and base coordinates move accordingly.
    pub fn regauge(&self, reps: &[GroupElement]) -> Result<CoveringGraph, CoveringError> {
        if reps.len() != self.base.len() {
            return Err(CoveringError::Length {
                expected: self.base.len(),
                found: reps.len(),
            });
        }
        for g in reps {
            self.spec.check(g)?;
        }
        let base = self
            .base
            .iter()
            .zip(reps)
            .map(|(b, g)| BaseNode {
                coords: match &self.action {
                    Some(a) => a.act(g, &b.coords).unwrap_or_else(|_| b.coords.clone()),
                    None => b.coords.clone(),
                },
                measure: b.measure,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(y, list)| {
                list.iter()
                    .map(|e| HalfEdge {
                        target: e.target,
                        shift: self.spec.mul_unchecked(
                            &self.spec.mul_unchecked(&reps[y], &e.shift),
                            &self.spec.inv_unchecked(&reps[e.target]),
                        ),
                        weight: e.weight,
                    })
                    .collect()
            })
            .collect();
        Ok(CoveringGraph::assemble(
            self.spec.clone(),
            base,
            edges,
            self.window_radius,
            self.action.clone(),
        ))
    }

    fn check_function(&self, f: &CoveringFunction) -> Result<(), CoveringError> {
        if f.values.len() == self.vertex_count() {
            Ok(())
        } else {
            Err(CoveringError::Length {
                expected: self.vertex_count(),
                found: f.values.len(),
            })
        }
    }

    /// Snapshot rows for CSV export.
    pub fn snapshot(&self, f: &CoveringFunction) -> Result<Vec<VertexRecord>, CoveringError> {
        self.check_function(f)?;
        Ok((0..self.vertex_count())
            .map(|v| {
                let c = self.coords(v);
                VertexRecord {
                    vertex: v,
                    copy: self.copy_element(v).to_string(),
                    base: self.project(v),
                    x: c.first().copied(),
                    y: c.get(1).copied(),
                    z: c.get(2).copied(),
                    re: f.values[v].re,
                    im: f.values[v].im,
                }
            })
            .collect())
    }
}

/// One CSV row of a covering-function snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct VertexRecord {
    pub vertex: usize,
    pub copy: String,
    pub base: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub re: f64,
    pub im: f64,
}

/// One CSV row of a section snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct SectionRecord {
    pub base: usize,
    pub component: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub re: f64,
    pub im: f64,
}

/// Builds one of the flat built-in models:
///
/// - `ℤ^d` over the `d`-torus (a line graph for `d = 1`),
/// - finite products of at most three cyclic factors over the
///   correspondingly multiply-wound circle or torus,
/// - the Klein-bottle group over the square grid of `ℝ²`.
///
/// Nodes sit at `(i + offset)·h`; nearest neighbours are joined with
/// weight `1/h²`; every node carries measure `h^d`.
pub fn build_covering(spec: &GroupSpec, config: &DomainConfig) -> Result<CoveringGraph, CoveringError> {
    let m = config.nodes_per_cell;
    let l = config.cell_length;
    if m == 0 {
        return Err(CoveringError::Config("nodes per cell must be at least 1".into()));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(CoveringError::Config(format!("cell length must be positive, got {l}")));
    }
    let dim = match spec.family() {
        GroupFamily::FiniteProduct(ns) if ns.len() > 3 => {
            return Err(CoveringError::Config(
                "built-in geometric models support at most three cyclic factors".into(),
            ))
        }
        _ => spec.rank(),
    };
    let offset = if config.offset.is_empty() {
        vec![0.0; dim]
    } else {
        config.offset.clone()
    };
    if offset.len() != dim || offset.iter().any(|o| !o.is_finite()) {
        return Err(CoveringError::Config(format!(
            "offset needs {dim} finite components, got {:?}",
            config.offset
        )));
    }
    let klein_shift = if matches!(spec.family(), GroupFamily::KleinBottle) {
        let k = 2.0 * offset[0];
        if k.fract() != 0.0 {
            return Err(CoveringError::Incompatible {
                symmetry: "reflection x -> -x of the generator b".into(),
                detail: format!(
                    "node offset {} is not a multiple of 1/2, so reflected nodes miss the grid",
                    offset[0]
                ),
            });
        }
        k as i64
    } else {
        0
    };
    let h = config.spacing();
    let weight = 1.0 / (h * h);
    let measure = h.powi(dim as i32);
    let mi = m as i64;

    // decompose a global grid index into (copy, base node)
    let decompose = |global: &[i64]| -> Result<(GroupElement, usize), CoveringError> {
        let (copy, local): (Vec<i64>, Vec<i64>) = match spec.family() {
            GroupFamily::KleinBottle => {
                let (gi, gj) = (global[0], global[1]);
                let q = gj.div_euclid(mi);
                let j = gj - q * mi;
                if q.rem_euclid(2) == 0 {
                    let p = gi.div_euclid(mi);
                    (vec![p, q], vec![gi - p * mi, j])
                } else {
                    let i = (-gi - klein_shift).rem_euclid(mi);
                    let p = (i + gi + klein_shift) / mi;
                    (vec![p, q], vec![i, j])
                }
            }
            _ => global
                .iter()
                .map(|&g| {
                    let p = g.div_euclid(mi);
                    (p, g - p * mi)
                })
                .unzip(),
        };
        let mut base = 0usize;
        for &c in &local {
            base = base * m + c as usize;
        }
        Ok((spec.element(&copy)?, base))
    };

    let count = m.checked_pow(dim as u32).ok_or_else(|| {
        CoveringError::Config("fundamental domain too large".into())
    })?;
    let mut base = Vec::with_capacity(count);
    let mut edges = Vec::with_capacity(count);
    let e = spec.identity();
    for y in 0..count {
        let mut idx = vec![0i64; dim];
        let mut rest = y;
        for a in (0..dim).rev() {
            idx[a] = (rest % m) as i64;
            rest /= m;
        }
        base.push(BaseNode {
            coords: idx.iter().zip(&offset).map(|(&i, o)| (i as f64 + o) * h).collect(),
            measure,
        });
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for a in 0..dim {
            for step in [1i64, -1] {
                let mut g = idx.clone();
                g[a] += step;
                let (shift, target) = decompose(&g)?;
                // simple-graph semantics: a neighbour reached twice (a cycle
                // of length 2) is one edge; a node is never its own neighbour
                if (target == y && shift == e) || !seen.insert((shift.clone(), target)) {
                    continue;
                }
                list.push(HalfEdge {
                    target,
                    shift,
                    weight,
                });
            }
        }
        edges.push(list);
    }
    let action = ContinuumAction::new(spec.clone(), l).ok();
    Ok(CoveringGraph::assemble(
        spec.clone(),
        base,
        edges,
        Some(config.window_radius),
        action,
    ))
}

/// Builds a graph from edge orbits `(y, y', h, w)`, each standing for the
/// edges `(g, y) — (g h, y')`. Both half-edges are stored; an orbit that is
/// its own reverse (`y = y'`, `h = h⁻¹`) is stored once.
pub fn from_edge_orbits(
    spec: &GroupSpec,
    base: Vec<BaseNode>,
    orbits: &[(usize, usize, GroupElement, f64)],
    window_radius: Option<u64>,
) -> Result<CoveringGraph, CoveringError> {
    if base.is_empty() {
        return Err(CoveringError::Config("fundamental domain is empty".into()));
    }
    if base.iter().any(|b| !(b.measure.is_finite() && b.measure > 0.0)) {
        return Err(CoveringError::Config("node measures must be positive".into()));
    }
    // with a uniform measure the symmetric graph Laplacian is self-adjoint
    // in L²(μ̃), which the kernel conventions rely on
    if base.iter().any(|b| b.measure != base[0].measure) {
        return Err(CoveringError::Config("node measures must be uniform".into()));
    }
    if !spec.is_finite() && window_radius.is_none() {
        return Err(CoveringError::Config(
            "infinite groups need a window radius".into(),
        ));
    }
    let n = base.len();
    let mut edges: Vec<Vec<HalfEdge>> = vec![Vec::new(); n];
    let e = spec.identity();
    for (y, t, h, w) in orbits {
        spec.check(h)?;
        if *y >= n || *t >= n {
            return Err(CoveringError::InvalidEdge(format!(
                "endpoint out of range: {y} -> {t} with {n} nodes"
            )));
        }
        if !(w.is_finite() && *w > 0.0) {
            return Err(CoveringError::InvalidEdge(format!("weight {w} is not positive")));
        }
        if y == t && *h == e {
            return Err(CoveringError::InvalidEdge(format!("self-loop at node {y}")));
        }
        let h_inv = spec.inv_unchecked(h);
        edges[*y].push(HalfEdge {
            target: *t,
            shift: h.clone(),
            weight: *w,
        });
        if !(y == t && *h == h_inv) {
            edges[*t].push(HalfEdge {
                target: *y,
                shift: h_inv,
                weight: *w,
            });
        }
    }
    Ok(CoveringGraph::assemble(spec.clone(), base, edges, window_radius, None))
}

/// The smallest covering of `ℤ_n`: one base node of unit measure and the
/// single edge orbit `(y, y, 1)` of unit weight. For `n = 2` this is the
/// two-vertex graph with Laplacian `[[1, −1], [−1, 1]]`; for `n = 1` the
/// graph has no edges.
pub fn micro_model(n: u32) -> Result<CoveringGraph, CoveringError> {
    let spec = GroupSpec::cyclic(n)?;
    let base = vec![BaseNode {
        coords: vec![0.0],
        measure: 1.0,
    }];
    let orbits = if n > 1 {
        vec![(0, 0, spec.element(&[1])?, 1.0)]
    } else {
        Vec::new()
    };
    from_edge_orbits(&spec, base, &orbits, None)
}

/// A function on the window vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringFunction {
    values: Vec<C64>,
}

impl CoveringFunction {
    pub fn zeros(graph: &CoveringGraph) -> Self {
        CoveringFunction {
            values: vec![C64::new(0.0, 0.0); graph.vertex_count()],
        }
    }

    pub fn from_values(graph: &CoveringGraph, values: Vec<C64>) -> Result<Self, CoveringError> {
        let f = CoveringFunction { values };
        graph.check_function(&f)?;
        Ok(f)
    }

    pub fn from_real(graph: &CoveringGraph, values: &[f64]) -> Result<Self, CoveringError> {
        Self::from_values(graph, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn delta(graph: &CoveringGraph, v: usize) -> Result<Self, CoveringError> {
        graph.check_vertex(v)?;
        let mut f = Self::zeros(graph);
        f.values[v] = C64::new(1.0, 0.0);
        Ok(f)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn get(&self, v: usize) -> C64 {
        self.values[v]
    }

    pub fn set(&mut self, v: usize, value: C64) {
        self.values[v] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_V μ̃ |f|²`.
    pub fn norm_sqr(&self, graph: &CoveringGraph) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(v, x)| graph.measure(v) * x.norm_sqr())
            .sum()
    }

    /// `Σ_V μ̃ conj(f) g`.
    pub fn inner(&self, other: &CoveringFunction, graph: &CoveringGraph) -> C64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(v, (a, b))| a.conj() * b * graph.measure(v))
            .sum()
    }

    /// Weighted distance `(Σ μ̃ |f − g|²)^{1/2}`.
    pub fn distance(&self, other: &CoveringFunction, graph: &CoveringGraph) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(v, (a, b))| graph.measure(v) * (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Whether the support stays off the outermost shell of copies.
    pub fn is_interior(&self, graph: &CoveringGraph) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(v, x)| *x == C64::new(0.0, 0.0) || graph.is_interior(v))
    }

    /// Largest copy norm carrying a nonzero value.
    pub fn support_radius(&self, graph: &CoveringGraph) -> u64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != C64::new(0.0, 0.0))
            .map(|(v, _)| graph.copy_norm(v))
            .max()
            .unwrap_or(0)
    }

    pub fn conj(&self) -> CoveringFunction {
        CoveringFunction {
            values: self.values.iter().map(|x| x.conj()).collect(),
        }
    }
}

/// `(L_s* f)(v) = f(s·v)`. Reads outside the window return zero; the
/// overflow flag is raised when a nonzero value of `f` is not read by any
/// in-window vertex.
pub fn pullback(
    graph: &CoveringGraph,
    s: &GroupElement,
    f: &CoveringFunction,
) -> Result<Flagged<CoveringFunction>, CoveringError> {
    graph.spec.check(s)?;
    graph.check_function(f)?;
    let mut out = CoveringFunction::zeros(graph);
    let mut read = vec![false; f.len()];
    for v in 0..graph.vertex_count() {
        if let Ok(sv) = graph.act_unchecked(s, v) {
            out.values[v] = f.values[sv];
            read[sv] = true;
        }
    }
    let lost = f
        .values
        .iter()
        .zip(&read)
        .any(|(x, r)| !r && *x != C64::new(0.0, 0.0));
    Ok(Flagged::new(out, if lost { Flags::overflow() } else { Flags::NONE }))
}

/// A section of the associated bundle, stored on the fundamental domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    values: Vec<C64>,
    dim: usize,
    twist: Option<Irrep>,
}

impl Section {
    /// Zero section with `dim` components per node and an optional twist
    /// (whose dimension must then equal `dim`).
    pub fn zeros(graph: &CoveringGraph, twist: Option<Irrep>) -> Self {
        let dim = twist.as_ref().map_or(1, |t| t.dim());
        Section {
            values: vec![C64::new(0.0, 0.0); graph.base_len() * dim],
            dim,
            twist,
        }
    }

    /// Section from node-major values (`dim` entries per base node).
    pub fn from_values(
        graph: &CoveringGraph,
        values: Vec<C64>,
        twist: Option<Irrep>,
    ) -> Result<Self, CoveringError> {
        let dim = twist.as_ref().map_or(1, |t| t.dim());
        if values.len() != graph.base_len() * dim {
            return Err(CoveringError::Length {
                expected: graph.base_len() * dim,
                found: values.len(),
            });
        }
        Ok(Section { values, dim, twist })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn twist(&self) -> Option<&Irrep> {
        self.twist.as_ref()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, y: usize) -> &[C64] {
        &self.values[y * self.dim..(y + 1) * self.dim]
    }

    pub fn value_mut(&mut self, y: usize) -> &mut [C64] {
        &mut self.values[y * self.dim..(y + 1) * self.dim]
    }

    /// Value of the equivariant extension at a window vertex,
    /// `ψ(g, y) = Λ(g) ψ(y)`.
    pub fn extend(&self, graph: &CoveringGraph, v: usize) -> Result<Vec<C64>, CoveringError> {
        graph.check_vertex(v)?;
        let y = self.value(graph.project(v));
        Ok(match &self.twist {
            None => y.to_vec(),
            Some(t) => {
                let lam = t.eval(graph.copy_element(v));
                (0..self.dim)
                    .map(|i| (0..self.dim).map(|k| lam[(i, k)] * y[k]).sum())
                    .collect()
            }
        })
    }

    pub fn norm_sqr(&self, graph: &CoveringGraph) -> f64 {
        (0..graph.base_len())
            .map(|y| graph.base_measure(y) * self.value(y).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn snapshot(&self, graph: &CoveringGraph) -> Vec<SectionRecord> {
        let mut out = Vec::with_capacity(self.values.len());
        for y in 0..graph.base_len() {
            let c = &graph.base_nodes()[y].coords;
            for (k, val) in self.value(y).iter().enumerate() {
                out.push(SectionRecord {
                    base: y,
                    component: k,
                    x: c.first().copied(),
                    y: c.get(1).copied(),
                    z: c.get(2).copied(),
                    re: val.re,
                    im: val.im,
                });
            }
        }
        out
    }
}

/// `(Φ_Λ φ⊗v)(y) = Σ_{s∈W} φ(s·y) Λ(s⁻¹) v` on the fundamental domain. The
/// overflow flag is raised when `φ` reaches the outermost shell of copies.
pub fn equivariant_lift(
    graph: &CoveringGraph,
    phi: &CoveringFunction,
    v: &[C64],
    irrep: &Irrep,
) -> Result<Flagged<Section>, CoveringError> {
    graph.check_function(phi)?;
    if irrep.spec() != graph.spec() {
        return Err(CoveringError::TwistMismatch);
    }
    let d = irrep.dim();
    if v.len() != d {
        return Err(CoveringError::Length {
            expected: d,
            found: v.len(),
        });
    }
    let mut out = Section::zeros(graph, Some(irrep.clone()));
    let n = graph.base_len();
    for (c, s) in graph.window.iter().enumerate() {
        let block = &phi.values[c * n..(c + 1) * n];
        if block.iter().all(|x| *x == C64::new(0.0, 0.0)) {
            continue;
        }
        let lam = irrep.eval(&graph.spec.inv_unchecked(s));
        let lv: Vec<C64> = (0..d).map(|i| (0..d).map(|k| lam[(i, k)] * v[k]).sum()).collect();
        for (y, &coef) in block.iter().enumerate() {
            for (o, l) in out.value_mut(y).iter_mut().zip(&lv) {
                *o += coef * l;
            }
        }
    }
    let flags = if phi.is_interior(graph) {
        Flags::NONE
    } else {
        Flags::overflow()
    };
    Ok(Flagged::new(out, flags))
}

/// `⟨ψ1, ψ2⟩ = Σ_{y∈D} μ(y) ⟨ψ1(y), ψ2(y)⟩`, conjugate-linear in `ψ1`.
pub fn section_inner(graph: &CoveringGraph, a: &Section, b: &Section) -> Result<C64, CoveringError> {
    if a.twist != b.twist || a.dim != b.dim {
        return Err(CoveringError::TwistMismatch);
    }
    if a.values.len() != graph.base_len() * a.dim || b.values.len() != a.values.len() {
        return Err(CoveringError::Length {
            expected: graph.base_len() * a.dim,
            found: b.values.len(),
        });
    }
    Ok((0..graph.base_len())
        .map(|y| {
            let ip: C64 = a.value(y).iter().zip(b.value(y)).map(|(x, z)| x.conj() * z).sum();
            ip * graph.base_measure(y)
        })
        .sum())
}
