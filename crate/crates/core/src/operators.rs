//! Invariant and twisted Schrödinger operators `−Δ + V` on covering graphs
//! and their heat / evolution kernels.
//!
//! The invariant operator acts on window functions by
//! `(Hf)(v) = Σ_{u~v} w (f(v) − f(u)) + V(π v) f(v)`, where the degree
//! term always contains every edge of the infinite graph and only the
//! in-window neighbours contribute off-diagonal entries (Dirichlet
//! truncation). On finite groups the window is the whole covering and no
//! truncation happens.
//!
//! The twisted operator `H_Λ` acts on `Λ`-equivariant sections stored on
//! the fundamental domain: the half-edge `(y → y', h, w)` contributes
//! `−w Λ(h)` to the block `(y, y')`, and `(deg(y) + V(y))·1` sits on the
//! diagonal.
//!
//! Kernels use the measure-normalized convention
//! `K(u, v) = [f(H)]_{uv} / μ̃(v)`, so that `(Kφ)(u) = Σ_v μ̃(v) K(u,v) φ(v)`,
//! and likewise `K^Λ(x, y) = [f(H_Λ)]_{xy} / μ(y)` for the twisted blocks.

use crate::covering::{CoveringFunction, CoveringGraph};
use crate::group::GroupElement;
use crate::harmonic::Irrep;
use crate::linalg::{chebyshev_heat_columns, max_abs, CsrMatrix, EigenFailure, HermitianEigen};
use crate::{CMatrix, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

/// Largest operator for which dense matrices are formed.
pub const DENSE_LIMIT: usize = 4096;

/// Above this size heat kernels are evaluated column-wise by a Chebyshev
/// expansion instead of a full eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error(
        "eigensolver did not converge (dimension {}, Frobenius norm {:.3e}, asymmetry {:.3e})",
        .0.dim, .0.norm, .0.asymmetry
    )]
    Eigensolver(EigenFailure),
    #[error("operator of dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

impl From<EigenFailure> for OperatorError {
    fn from(e: EigenFailure) -> Self {
        OperatorError::Eigensolver(e)
    }
}

/// A real bounded potential on the fundamental domain, extended to the
/// covering by `V(v) = V(π v)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    values: Vec<f64>,
}

impl Potential {
    pub fn zero(base_len: usize) -> Self {
        Potential {
            values: vec![0.0; base_len],
        }
    }

    pub fn constant(base_len: usize, c: f64) -> Result<Self, OperatorError> {
        Self::table(vec![c; base_len])
    }

    pub fn table(values: Vec<f64>) -> Result<Self, OperatorError> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(OperatorError::InvalidPotential(format!(
                "value {v} at node {i} is not a bounded real number"
            )));
        }
        Ok(Potential { values })
    }

    /// Rejects values with a nonzero imaginary part.
    pub fn from_complex(values: &[C64]) -> Result<Self, OperatorError> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.im != 0.0) {
            return Err(OperatorError::InvalidPotential(format!(
                "value {v} at node {i} is not real"
            )));
        }
        Self::table(values.iter().map(|v| v.re).collect())
    }

    /// `V(x) = A Σ_a (1 − cos(2π x_a / L))`, a smooth well centred on the
    /// cell corners. Invariant under translations by `L` and under the
    /// reflection of the Klein-bottle generator.
    pub fn cosine_well(graph: &CoveringGraph, amplitude: f64) -> Result<Self, OperatorError> {
        let action = graph.continuum_action().ok_or_else(|| {
            OperatorError::InvalidPotential("cosine well needs a geometric model".into())
        })?;
        let l = action.cell_length();
        Self::table(
            graph
                .base_nodes()
                .iter()
                .map(|b| {
                    amplitude
                        * b.coords
                            .iter()
                            .map(|x| 1.0 - (2.0 * std::f64::consts::PI * x / l).cos())
                            .sum::<f64>()
                })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, graph: &CoveringGraph) -> Result<(), OperatorError> {
        if self.values.len() != graph.base_len() {
            return Err(OperatorError::InvalidPotential(format!(
                "potential has {} values, fundamental domain has {} nodes",
                self.values.len(),
                graph.base_len()
            )));
        }
        Ok(())
    }
}

/// Time parameter of a kernel `f(H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelTime {
    /// `exp(−τH)`.
    Heat(f64),
    /// `exp(−itH)`.
    Real(f64),
    /// `exp(−i(t − iε)H)`.
    Complex { t: f64, eps: f64 },
}

impl KernelTime {
    pub fn validate(&self) -> Result<(), OperatorError> {
        match *self {
            KernelTime::Heat(tau) if !(tau.is_finite() && tau >= 0.0) => Err(OperatorError::Domain(
                format!("imaginary time must be nonnegative, got {tau}"),
            )),
            KernelTime::Real(t) if !t.is_finite() => {
                Err(OperatorError::Domain(format!("time {t} is not finite")))
            }
            KernelTime::Complex { t, eps } if !(t.is_finite() && eps.is_finite() && eps > 0.0) => {
                Err(OperatorError::Domain(format!(
                    "complex time needs finite t and eps > 0, got t = {t}, eps = {eps}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The spectral function.
    pub fn eval(&self, lambda: f64) -> C64 {
        match *self {
            KernelTime::Heat(tau) => C64::new((-tau * lambda).exp(), 0.0),
            KernelTime::Real(t) => C64::cis(-t * lambda),
            KernelTime::Complex { t, eps } => C64::cis(-t * lambda) * (-eps * lambda).exp(),
        }
    }

    pub fn is_heat(&self) -> bool {
        matches!(self, KernelTime::Heat(_))
    }

    /// Scalar reported next to kernels in CSV exports.
    pub fn label(&self) -> f64 {
        match *self {
            KernelTime::Heat(tau) => tau,
            KernelTime::Real(t) | KernelTime::Complex { t, .. } => t,
        }
    }
}

/// `H = −Δ + V` on the window vertices.
#[derive(Debug, Clone)]
pub struct InvariantHamiltonian {
    graph: Arc<CoveringGraph>,
    potential: Potential,
    csr: CsrMatrix,
}

pub fn assemble_invariant(
    graph: &Arc<CoveringGraph>,
    potential: &Potential,
) -> Result<InvariantHamiltonian, OperatorError> {
    potential.check(graph)?;
    let rows = (0..graph.vertex_count())
        .map(|v| {
            let y = graph.project(v);
            let mut row = vec![(v, graph.degree(y) + potential.values[y])];
            for (u, w) in graph.neighbors(v) {
                if let Some(u) = u {
                    row.push((u, -w));
                }
            }
            row
        })
        .collect();
    Ok(InvariantHamiltonian {
        graph: graph.clone(),
        potential: potential.clone(),
        csr: CsrMatrix::from_rows(rows),
    })
}

impl InvariantHamiltonian {
    pub fn graph(&self) -> &Arc<CoveringGraph> {
        &self.graph
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn dim(&self) -> usize {
        self.csr.dim()
    }

    pub fn apply(&self, f: &CoveringFunction) -> CoveringFunction {
        let values = self.csr.apply(f.values());
        CoveringFunction::from_values(&self.graph, values).expect("dimension matches the graph")
    }

    pub fn dense(&self) -> Result<DMatrix<f64>, OperatorError> {
        if self.dim() > DENSE_LIMIT {
            return Err(OperatorError::TooLarge {
                dim: self.dim(),
                limit: DENSE_LIMIT,
            });
        }
        Ok(self.csr.to_dense())
    }

    /// The Laplacian part alone (potential removed).
    pub fn laplacian(&self) -> Result<InvariantHamiltonian, OperatorError> {
        assemble_invariant(&self.graph, &Potential::zero(self.graph.base_len()))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.csr.max_asymmetry()
    }

    /// Largest entry of `H P_s − P_s H` over the rows of interior vertices
    /// whose image under `s` is interior as well.
    pub fn invariance_defect(&self, s: &GroupElement) -> Result<f64, OperatorError> {
        self.graph
            .spec()
            .check(s)
            .map_err(|e| OperatorError::Domain(e.to_string()))?;
        let s_inv = self.graph.spec().inverse(s).expect("checked");
        let mut worst = 0.0f64;
        for u in 0..self.dim() {
            if !self.graph.is_interior(u) {
                continue;
            }
            let Ok(su) = self.graph.act_unchecked(s, u) else { continue };
            if !self.graph.is_interior(su) {
                continue;
            }
            for (v, val) in self.csr.row(u) {
                let other = match self.graph.act_unchecked(s, v) {
                    Ok(sv) => self.csr.get(su, sv),
                    Err(_) => 0.0,
                };
                worst = worst.max((other - val).abs());
            }
            for (w, val) in self.csr.row(su) {
                let other = match self.graph.act_unchecked(&s_inv, w) {
                    Ok(v) => self.csr.get(u, v),
                    Err(_) => 0.0,
                };
                worst = worst.max((other - val).abs());
            }
        }
        Ok(worst)
    }

    pub fn eigen(&self) -> Result<HermitianEigen, OperatorError> {
        if self.dim() > DENSE_EIGEN_LIMIT {
            return Err(OperatorError::TooLarge {
                dim: self.dim(),
                limit: DENSE_EIGEN_LIMIT,
            });
        }
        Ok(HermitianEigen::of_real(&self.csr.to_dense())?)
    }

    pub fn spectrum(&self) -> Result<Vec<f64>, OperatorError> {
        Ok(self.eigen()?.sorted_values())
    }

    /// Full kernel from a precomputed eigendecomposition.
    pub fn kernel_from_eigen(&self, eigen: &HermitianEigen, time: KernelTime) -> Result<InvariantKernel, OperatorError> {
        time.validate()?;
        let mut values = eigen.synthesize(|l| time.eval(l));
        divide_columns_by_measure(&mut values, |v| self.graph.measure(v));
        Ok(InvariantKernel {
            graph: self.graph.clone(),
            time,
            sources: (0..self.dim()).collect(),
            values,
        })
    }

    /// Kernel columns `K(·, v)` for the given source vertices. Heat kernels
    /// of operators above [`DENSE_EIGEN_LIMIT`] use a Chebyshev expansion;
    /// everything else goes through the dense eigendecomposition.
    pub fn kernel_columns(&self, time: KernelTime, sources: &[usize]) -> Result<InvariantKernel, OperatorError> {
        time.validate()?;
        for &v in sources {
            self.graph
                .check_vertex(v)
                .map_err(|e| OperatorError::Domain(e.to_string()))?;
        }
        let n = self.dim();
        let values = match time {
            KernelTime::Heat(tau) if n > DENSE_EIGEN_LIMIT => {
                let starts = DMatrix::from_fn(n, sources.len(), |i, j| if sources[j] == i { 1.0 } else { 0.0 });
                let cols = chebyshev_heat_columns(&self.csr, tau, &starts);
                CMatrix::from_fn(n, sources.len(), |i, j| {
                    C64::new(cols[(i, j)] / self.graph.measure(sources[j]), 0.0)
                })
            }
            _ => {
                let full = self.kernel_from_eigen(&self.eigen()?, time)?;
                CMatrix::from_fn(n, sources.len(), |i, j| full.values[(i, sources[j])])
            }
        };
        Ok(InvariantKernel {
            graph: self.graph.clone(),
            time,
            sources: sources.to_vec(),
            values,
        })
    }
}

fn divide_columns_by_measure(m: &mut CMatrix, measure: impl Fn(usize) -> f64) {
    for j in 0..m.ncols() {
        let mu = measure(j);
        for z in m.column_mut(j).iter_mut() {
            *z /= mu;
        }
    }
}

/// `H_Λ` on `Λ`-equivariant sections stored on the fundamental domain.
#[derive(Debug, Clone)]
pub struct TwistedHamiltonian {
    graph: Arc<CoveringGraph>,
    irrep: Irrep,
    potential: Potential,
    matrix: CMatrix,
}

pub fn assemble_twisted(
    graph: &Arc<CoveringGraph>,
    potential: &Potential,
    irrep: &Irrep,
) -> Result<TwistedHamiltonian, OperatorError> {
    potential.check(graph)?;
    if irrep.spec() != graph.spec() {
        return Err(OperatorError::Domain(
            "irreducible representation belongs to a different group".into(),
        ));
    }
    let d = irrep.dim();
    let n = graph.base_len();
    let mut matrix = CMatrix::zeros(n * d, n * d);
    for y in 0..n {
        let diag = graph.degree(y) + potential.values[y];
        for k in 0..d {
            matrix[(y * d + k, y * d + k)] += C64::new(diag, 0.0);
        }
        for e in graph.edges(y) {
            let lam = irrep.eval(&e.shift);
            for i in 0..d {
                for k in 0..d {
                    matrix[(y * d + i, e.target * d + k)] -= lam[(i, k)] * e.weight;
                }
            }
        }
    }
    Ok(TwistedHamiltonian {
        graph: graph.clone(),
        irrep: irrep.clone(),
        potential: potential.clone(),
        matrix,
    })
}

impl TwistedHamiltonian {
    pub fn graph(&self) -> &Arc<CoveringGraph> {
        &self.graph
    }

    pub fn irrep(&self) -> &Irrep {
        &self.irrep
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    /// `H_Λ ψ` on node-major section values.
    pub fn apply(&self, values: &[C64]) -> Vec<C64> {
        let x = nalgebra::DVector::from_column_slice(values);
        (&self.matrix * x).iter().copied().collect()
    }

    pub fn eigen(&self) -> Result<HermitianEigen, OperatorError> {
        Ok(HermitianEigen::of_complex(&self.matrix)?)
    }

    pub fn spectrum(&self) -> Result<Vec<f64>, OperatorError> {
        Ok(self.eigen()?.sorted_values())
    }

    pub fn kernel_from_eigen(&self, eigen: &HermitianEigen, time: KernelTime) -> Result<EquivariantKernel, OperatorError> {
        time.validate()?;
        let d = self.irrep.dim();
        let mut blocks = eigen.synthesize(|l| time.eval(l));
        divide_columns_by_measure(&mut blocks, |c| self.graph.base_measure(c / d));
        Ok(EquivariantKernel {
            irrep: self.irrep.clone(),
            time,
            base_len: self.graph.base_len(),
            blocks,
        })
    }
}

/// Operators with a spectral calculus producing kernels.
pub trait SpectralOperator {
    type Kernel;
    fn kernel(&self, time: KernelTime) -> Result<Self::Kernel, OperatorError>;
}

impl SpectralOperator for InvariantHamiltonian {
    type Kernel = InvariantKernel;

    fn kernel(&self, time: KernelTime) -> Result<InvariantKernel, OperatorError> {
        time.validate()?;
        self.kernel_from_eigen(&self.eigen()?, time)
    }
}

impl SpectralOperator for TwistedHamiltonian {
    type Kernel = EquivariantKernel;

    fn kernel(&self, time: KernelTime) -> Result<EquivariantKernel, OperatorError> {
        time.validate()?;
        self.kernel_from_eigen(&self.eigen()?, time)
    }
}

/// `exp(−τH)` as a measure-normalized kernel.
pub fn heat_kernel<H: SpectralOperator>(h: &H, tau: f64) -> Result<H::Kernel, OperatorError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(OperatorError::Domain(format!("tau must be positive, got {tau}")));
    }
    h.kernel(KernelTime::Heat(tau))
}

/// `exp(−itH)` as a measure-normalized kernel.
pub fn propagator<H: SpectralOperator>(h: &H, t: f64) -> Result<H::Kernel, OperatorError> {
    h.kernel(KernelTime::Real(t))
}

/// Free heat kernel `(4πτ)^{−d/2} exp(−|x − y|²/(4τ))` on `ℝ^d`, `d ∈ {1, 2}`.
pub fn continuum_free_heat_kernel(x: &[f64], y: &[f64], tau: f64) -> Result<f64, OperatorError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(OperatorError::Domain(format!("tau must be positive, got {tau}")));
    }
    if x.len() != y.len() || !(1..=2).contains(&x.len()) {
        return Err(OperatorError::Domain(format!(
            "points must share dimension 1 or 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((4.0 * std::f64::consts::PI * tau).powf(-(x.len() as f64) / 2.0) * (-d2 / (4.0 * tau)).exp())
}

/// Scalar kernel `K(u, v)` on window vertices, stored for a list of source
/// vertices `v` (all vertices for full kernels).
#[derive(Debug, Clone)]
pub struct InvariantKernel {
    graph: Arc<CoveringGraph>,
    time: KernelTime,
    sources: Vec<usize>,
    values: CMatrix,
}

impl InvariantKernel {
    /// Kernel from explicit values, `values[(u, j)] = K(u, sources[j])`.
    pub fn from_columns(
        graph: Arc<CoveringGraph>,
        time: KernelTime,
        sources: Vec<usize>,
        values: CMatrix,
    ) -> Result<Self, OperatorError> {
        if values.nrows() != graph.vertex_count() || values.ncols() != sources.len() {
            return Err(OperatorError::Domain(format!(
                "kernel values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                graph.vertex_count(),
                sources.len()
            )));
        }
        Ok(InvariantKernel {
            graph,
            time,
            sources,
            values,
        })
    }

    pub fn graph(&self) -> &Arc<CoveringGraph> {
        &self.graph
    }

    pub fn time(&self) -> KernelTime {
        self.time
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn is_full(&self) -> bool {
        self.sources.len() == self.graph.vertex_count()
            && self.sources.iter().enumerate().all(|(i, &s)| i == s)
    }

    fn column_of(&self, v: usize) -> Option<usize> {
        if self.is_full() {
            Some(v)
        } else {
            self.sources.iter().position(|&s| s == v)
        }
    }

    /// `K(u, v)`, or `None` if `v` is not a stored source.
    pub fn get(&self, u: usize, v: usize) -> Option<C64> {
        if u >= self.values.nrows() {
            return None;
        }
        self.column_of(v).map(|j| self.values[(u, j)])
    }

    /// `f(H) = K·diag(μ̃)` for full kernels.
    pub fn operator_matrix(&self) -> Result<CMatrix, OperatorError> {
        if !self.is_full() {
            return Err(OperatorError::Domain("kernel is not stored for all sources".into()));
        }
        let mut m = self.values.clone();
        for j in 0..m.ncols() {
            let mu = self.graph.measure(j);
            for z in m.column_mut(j).iter_mut() {
                *z *= mu;
            }
        }
        Ok(m)
    }

    /// `max |Σ_w μ̃(w) K(u,w) K(v,w)* − δ_{uv}/μ̃(u)|`.
    pub fn unitarity_defect(&self) -> Result<f64, OperatorError> {
        let u = self.operator_matrix()?;
        let n = u.nrows();
        Ok(max_abs(&(&u * u.adjoint() - CMatrix::identity(n, n))))
    }

    /// `max |K(u,v) − conj(K(v,u))|` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in self.sources.iter().enumerate() {
            for (i, &u) in self.sources.iter().enumerate() {
                worst = worst.max((self.values[(u, j)] - self.values[(v, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(Kφ)(u) = Σ_v μ̃(v) K(u, v) φ(v)`; `φ` must vanish off the sources.
    pub fn apply(&self, phi: &CoveringFunction) -> Result<CoveringFunction, OperatorError> {
        let mut out = vec![C64::new(0.0, 0.0); self.graph.vertex_count()];
        for (v, x) in phi.values().iter().enumerate() {
            if *x == C64::new(0.0, 0.0) {
                continue;
            }
            let j = self.column_of(v).ok_or_else(|| {
                OperatorError::Domain(format!("vertex {v} is not a stored kernel source"))
            })?;
            let scale = *x * self.graph.measure(v);
            for (o, k) in out.iter_mut().zip(self.values.column(j).iter()) {
                *o += scale * k;
            }
        }
        Ok(CoveringFunction::from_values(&self.graph, out).expect("dimension matches"))
    }

    pub fn records(&self) -> Vec<KernelRecord> {
        let mut out = Vec::with_capacity(self.values.len());
        for (j, &v) in self.sources.iter().enumerate() {
            for u in 0..self.values.nrows() {
                let z = self.values[(u, j)];
                out.push(KernelRecord {
                    row: u,
                    col: v,
                    component_row: 0,
                    component_col: 0,
                    re: z.re,
                    im: z.im,
                    time: self.time.label(),
                });
            }
        }
        out
    }
}

/// Block kernel `K^Λ(x, y)` on the fundamental domain.
#[derive(Debug, Clone)]
pub struct EquivariantKernel {
    irrep: Irrep,
    time: KernelTime,
    base_len: usize,
    blocks: CMatrix,
}

impl EquivariantKernel {
    /// Kernel from an assembled block matrix.
    pub fn from_blocks(irrep: Irrep, time: KernelTime, blocks: CMatrix) -> Result<Self, OperatorError> {
        let d = irrep.dim();
        if blocks.nrows() != blocks.ncols() || !blocks.nrows().is_multiple_of(d) {
            return Err(OperatorError::Domain(format!(
                "block matrix {}x{} does not match irrep dimension {d}",
                blocks.nrows(),
                blocks.ncols()
            )));
        }
        Ok(EquivariantKernel {
            base_len: blocks.nrows() / d,
            irrep,
            time,
            blocks,
        })
    }

    pub fn irrep(&self) -> &Irrep {
        &self.irrep
    }

    pub fn time(&self) -> KernelTime {
        self.time
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn blocks(&self) -> &CMatrix {
        &self.blocks
    }

    pub fn block(&self, x: usize, y: usize) -> CMatrix {
        let d = self.irrep.dim();
        self.blocks.view((x * d, y * d), (d, d)).into_owned()
    }

    /// `K^Λ((g,x),(h,y)) = Λ(g) K^Λ(x,y) Λ(h)⁻¹` at two window vertices.
    pub fn extend(&self, graph: &CoveringGraph, u: usize, v: usize) -> Result<CMatrix, OperatorError> {
        for w in [u, v] {
            graph
                .check_vertex(w)
                .map_err(|e| OperatorError::Domain(e.to_string()))?;
        }
        let lg = self.irrep.eval(graph.copy_element(u));
        let lh = self.irrep.eval(graph.copy_element(v));
        Ok(lg * self.block(graph.project(u), graph.project(v)) * lh.adjoint())
    }

    /// Hermiticity of the block matrix (meaningful for heat kernels).
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.blocks - self.blocks.adjoint()))
    }

    pub fn records(&self) -> Vec<KernelRecord> {
        let d = self.irrep.dim();
        let mut out = Vec::with_capacity(self.blocks.len());
        for x in 0..self.base_len {
            for y in 0..self.base_len {
                for i in 0..d {
                    for k in 0..d {
                        let z = self.blocks[(x * d + i, y * d + k)];
                        out.push(KernelRecord {
                            row: x,
                            col: y,
                            component_row: i,
                            component_col: k,
                            re: z.re,
                            im: z.im,
                            time: self.time.label(),
                        });
                    }
                }
            }
        }
        out
    }
}

/// One CSV row of a kernel export.
#[derive(Debug, Clone, Serialize)]
pub struct KernelRecord {
    pub row: usize,
    pub col: usize,
    pub component_row: usize,
    pub component_col: usize,
    pub re: f64,
    pub im: f64,
    pub time: f64,
}

/// Twisted heat kernels for every node of a dual grid, computed in parallel
/// and returned in node order.
pub fn twisted_kernels(
    graph: &Arc<CoveringGraph>,
    potential: &Potential,
    irreps: &[&Irrep],
    time: KernelTime,
) -> Result<Vec<EquivariantKernel>, OperatorError> {
    irreps
        .par_iter()
        .map(|irrep| assemble_twisted(graph, potential, irrep)?.kernel(time))
        .collect()
}
