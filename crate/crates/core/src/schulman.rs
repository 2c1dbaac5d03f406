//! Image sums and their inverse.
//!
//! Forward direction (method of images):
//! `K^Λ(x, y) = Σ_s Λ(s) K(s⁻¹·x, y)` for fundamental-domain nodes
//! `x = (e, x)`, `y = (e, y)`.
//!
//! Backward direction (trace reconstruction):
//! `K(s⁻¹·x, y) = ∫ Tr[Λ(s)* K^Λ(x, y)] dm̂(Λ)`.
//!
//! Smeared form: for test functions `φ1, φ2`,
//! `F(s) = Σ_{u,v} μ̃(u) μ̃(v) φ1(s·u) K(u, v) φ2(v)` and
//! `G(Λ) = Σ_{x,y} P_x K^Λ(x, y) Q_y` with
//! `P_x = Σ_g μ̃ φ1(g, x) Λ(g)` and `Q_y = Σ_h μ̃ φ2(h, y) Λ(h⁻¹)`;
//! then `G = 𝓕[F]` and `F = 𝓕⁻¹[G]`. Both pairings are bilinear (no
//! complex conjugation), which is the distributional pairing `K(φ1 ⊗ φ2)`.

use crate::covering::{pullback, CoveringError, CoveringFunction, CoveringGraph};
use crate::group::GroupElement;
use crate::harmonic::{fourier, inverse_fourier, DualField, DualGrid, GroupFunction, HarmonicError, Irrep};
use crate::linalg::{axpy, frobenius};
use crate::operators::{EquivariantKernel, InvariantKernel, KernelTime, OperatorError};
use crate::{CMatrix, Defect, Flagged, Flags, C64};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

/// Default relative shell threshold of the adaptive image sum.
pub const DEFAULT_EPS_TAIL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchulmanError {
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(
        "real-time image sums over the infinite group {group} do not converge pointwise; \
         use complex time t - i*eps (eps > 0) or the smeared pairings"
    )]
    RealTimeRefused { group: String },
    #[error("kernel column for source vertex {0} is not available")]
    MissingSource(usize),
    #[error("inconsistent inputs: {0}")]
    Shape(String),
}

/// Truncated image sum together with its truncation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSum {
    pub value: CMatrix,
    /// Ball radius actually summed.
    pub radius: u64,
    /// `Σ_{s in last shell} ‖Λ(s) K(s⁻¹x, y)‖_HS`.
    pub last_shell: f64,
    /// Estimated remainder beyond the ball: the geometric continuation of
    /// the last two shells, zero when the ball exhausts a finite group.
    pub tail: f64,
    pub flags: Flags,
}

fn refuse_real_time(kernel: &InvariantKernel) -> Result<(), SchulmanError> {
    let spec = kernel.graph().spec();
    if matches!(kernel.time(), KernelTime::Real(_)) && !spec.is_finite() {
        return Err(SchulmanError::RealTimeRefused {
            group: spec.description().to_string(),
        });
    }
    Ok(())
}

fn check_irrep(graph: &CoveringGraph, irrep: &Irrep) -> Result<(), SchulmanError> {
    if irrep.spec() != graph.spec() {
        return Err(SchulmanError::Shape("representation belongs to a different group".into()));
    }
    Ok(())
}

/// Shell sums `Σ_{s∈shell r} Λ(s) K(s⁻¹x, y)` and their HS-weights, for
/// `r = 0..=radius`.
struct Shells {
    sums: Vec<CMatrix>,
    weights: Vec<f64>,
    flags: Flags,
}

fn shells(
    kernel: &InvariantKernel,
    irrep: &Irrep,
    lambdas: &[(GroupElement, CMatrix)],
    x: usize,
    y: usize,
    radius: u64,
) -> Result<Shells, SchulmanError> {
    let graph = kernel.graph();
    let spec = graph.spec();
    let col = graph.rep(y);
    let xv = graph.rep(x);
    let d = irrep.dim();
    let mut sums = vec![CMatrix::zeros(d, d); radius as usize + 1];
    let mut weights = vec![0.0; radius as usize + 1];
    let mut flags = Flags::NONE;
    for (s, lam) in lambdas {
        let r = spec.norm(s) as usize;
        if r > radius as usize {
            continue;
        }
        match graph.act_unchecked(&spec.inv_unchecked(s), xv) {
            Ok(u) => {
                let k = kernel.get(u, col).ok_or(SchulmanError::MissingSource(col))?;
                axpy(&mut sums[r], k, lam);
                weights[r] += k.norm() * (d as f64).sqrt();
            }
            Err(_) => flags = Flags::overflow(),
        }
    }
    Ok(Shells { sums, weights, flags })
}

fn finish(sh: Shells, radius: u64, exhausted: bool) -> ImageSum {
    let d = sh.sums[0].nrows();
    let mut value = CMatrix::zeros(d, d);
    for s in &sh.sums {
        value += s;
    }
    let last = *sh.weights.last().unwrap_or(&0.0);
    let tail = if exhausted {
        0.0
    } else if sh.weights.len() >= 2 {
        let prev = sh.weights[sh.weights.len() - 2];
        if last == 0.0 {
            0.0
        } else if prev > 0.0 && last < prev {
            let q = last / prev;
            last * q / (1.0 - q)
        } else {
            f64::INFINITY
        }
    } else if last == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    ImageSum {
        value,
        radius,
        last_shell: last,
        tail,
        flags: sh.flags,
    }
}

fn ball_matrices(graph: &CoveringGraph, irrep: &Irrep, radius: u64) -> Vec<(GroupElement, CMatrix)> {
    graph
        .spec()
        .enumerate_ball(radius)
        .into_iter()
        .map(|s| {
            let m = irrep.eval(&s);
            (s, m)
        })
        .collect()
}

fn exhausts(graph: &CoveringGraph, radius: u64) -> bool {
    graph.spec().diameter().is_some_and(|d| radius >= d)
}

/// `Σ_{‖s‖ ≤ radius} Λ(s) K(s⁻¹·(e,x), (e,y))`. Real-time kernels on
/// infinite groups are refused. Terms whose image leaves the window are
/// skipped and flagged.
pub fn image_sum(
    kernel: &InvariantKernel,
    irrep: &Irrep,
    x: usize,
    y: usize,
    radius: u64,
) -> Result<ImageSum, SchulmanError> {
    refuse_real_time(kernel)?;
    let graph = kernel.graph();
    check_irrep(graph, irrep)?;
    graph.check_base(x)?;
    graph.check_base(y)?;
    let lambdas = ball_matrices(graph, irrep, radius);
    let sh = shells(kernel, irrep, &lambdas, x, y, radius)?;
    Ok(finish(sh, radius, exhausts(graph, radius)))
}

/// Image sum grown shell by shell until a full shell weighs less than
/// `eps_tail` times the partial sum, or `max_radius` is reached.
pub fn image_sum_adaptive(
    kernel: &InvariantKernel,
    irrep: &Irrep,
    x: usize,
    y: usize,
    eps_tail: f64,
    max_radius: u64,
) -> Result<ImageSum, SchulmanError> {
    refuse_real_time(kernel)?;
    let graph = kernel.graph();
    check_irrep(graph, irrep)?;
    graph.check_base(x)?;
    graph.check_base(y)?;
    let cap = match graph.spec().diameter() {
        Some(d) => max_radius.min(d),
        None => max_radius,
    };
    let lambdas = ball_matrices(graph, irrep, cap);
    let sh = shells(kernel, irrep, &lambdas, x, y, cap)?;
    let mut partial = CMatrix::zeros(irrep.dim(), irrep.dim());
    let mut stop = cap;
    for (r, s) in sh.sums.iter().enumerate() {
        partial += s;
        if r > 0 && sh.weights[r] < eps_tail * frobenius(&partial) {
            stop = r as u64;
            break;
        }
    }
    let truncated = Shells {
        sums: sh.sums[..=stop as usize].to_vec(),
        weights: sh.weights[..=stop as usize].to_vec(),
        flags: sh.flags,
    };
    Ok(finish(truncated, stop, exhausts(graph, stop)))
}

/// Image sums for all pairs of fundamental-domain nodes.
#[derive(Debug, Clone)]
pub struct ImageSumKernel {
    pub kernel: EquivariantKernel,
    pub radius: u64,
    /// Largest tail estimate over all pairs.
    pub tail: f64,
    pub flags: Flags,
}

/// Assembles `K^Λ` from image sums over the ball of the given radius.
pub fn image_sum_kernel(
    kernel: &InvariantKernel,
    irrep: &Irrep,
    radius: u64,
) -> Result<ImageSumKernel, SchulmanError> {
    refuse_real_time(kernel)?;
    let graph = kernel.graph();
    check_irrep(graph, irrep)?;
    let n = graph.base_len();
    let d = irrep.dim();
    let lambdas = ball_matrices(graph, irrep, radius);
    let exhausted = exhausts(graph, radius);
    let columns: Vec<Vec<ImageSum>> = (0..n)
        .into_par_iter()
        .map(|y| {
            (0..n)
                .map(|x| Ok(finish(shells(kernel, irrep, &lambdas, x, y, radius)?, radius, exhausted)))
                .collect::<Result<Vec<_>, SchulmanError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut blocks = CMatrix::zeros(n * d, n * d);
    let mut tail = 0.0f64;
    let mut flags = Flags::NONE;
    for (y, col) in columns.iter().enumerate() {
        for (x, s) in col.iter().enumerate() {
            blocks.view_mut((x * d, y * d), (d, d)).copy_from(&s.value);
            tail = tail.max(s.tail);
            flags |= s.flags;
        }
    }
    Ok(ImageSumKernel {
        kernel: EquivariantKernel::from_blocks(irrep.clone(), kernel.time(), blocks)?,
        radius,
        tail,
        flags,
    })
}

fn check_fields(fields: &[EquivariantKernel], grid: &DualGrid) -> Result<(), SchulmanError> {
    if fields.len() != grid.len() {
        return Err(SchulmanError::Shape(format!(
            "{} kernels for {} dual nodes",
            fields.len(),
            grid.len()
        )));
    }
    for (i, (f, node)) in fields.iter().zip(grid.nodes()).enumerate() {
        if f.irrep() != &node.irrep {
            return Err(SchulmanError::Shape(format!(
                "kernel {i} carries a different representation than its node"
            )));
        }
    }
    Ok(())
}

/// `K(s⁻¹·(e,x), (e,y)) = ∫ Tr[Λ(s)* K^Λ(x,y)] dm̂(Λ)`.
pub fn reconstruct_invariant(
    fields: &[EquivariantKernel],
    grid: &DualGrid,
    s: &GroupElement,
    x: usize,
    y: usize,
) -> Result<C64, SchulmanError> {
    check_fields(fields, grid)?;
    grid.spec().check(s).map_err(HarmonicError::from)?;
    if let Some(f) = fields.first() {
        if x >= f.base_len() || y >= f.base_len() {
            return Err(SchulmanError::Shape(format!("nodes ({x}, {y}) out of range")));
        }
    }
    Ok(fields
        .iter()
        .zip(grid.nodes())
        .map(|(f, node)| {
            let lam = node.irrep.eval(s);
            crate::linalg::trace_adjoint_product(&lam, &f.block(x, y)) * node.weight
        })
        .sum())
}

/// Reconstructs the kernel columns `K(·, (e, y))` on the whole window from
/// the twisted family: `K((g, x), (e, y)) = ∫ Tr[Λ(g) K^Λ(x, y)] dm̂`.
pub fn reconstruct_columns(
    fields: &[EquivariantKernel],
    grid: &DualGrid,
    graph: &Arc<CoveringGraph>,
) -> Result<InvariantKernel, SchulmanError> {
    check_fields(fields, grid)?;
    if grid.spec() != graph.spec() {
        return Err(SchulmanError::Shape("grid and graph belong to different groups".into()));
    }
    let n = graph.base_len();
    if fields.iter().any(|f| f.base_len() != n) {
        return Err(SchulmanError::Shape("kernel blocks do not match the domain".into()));
    }
    let time = fields.first().map_or(KernelTime::Heat(0.0), |f| f.time());
    let per_copy: Vec<Vec<C64>> = (0..graph.copy_count())
        .into_par_iter()
        .map(|c| {
            let g = &graph.window()[c];
            let mut vals = vec![C64::new(0.0, 0.0); n * n];
            for (f, node) in fields.iter().zip(grid.nodes()) {
                let lam = node.irrep.eval(g);
                let d = node.irrep.dim();
                let b = f.blocks();
                for x in 0..n {
                    for y in 0..n {
                        let mut tr = C64::new(0.0, 0.0);
                        for i in 0..d {
                            for k in 0..d {
                                tr += lam[(i, k)] * b[(x * d + k, y * d + i)];
                            }
                        }
                        vals[x * n + y] += tr * node.weight;
                    }
                }
            }
            vals
        })
        .collect();
    let sources: Vec<usize> = (0..n).map(|y| graph.rep(y)).collect();
    let values = CMatrix::from_fn(graph.vertex_count(), n, |u, y| {
        per_copy[graph.copy_of(u)][graph.project(u) * n + y]
    });
    Ok(InvariantKernel::from_columns(graph.clone(), time, sources, values)?)
}

/// The smeared pair `(F, G)` for a pair of test functions.
#[derive(Debug, Clone)]
pub struct SmearedPairing {
    pub f: GroupFunction,
    pub g: DualField,
    pub flags: Flags,
}

/// `F(s) = Σ_{u,v} μ̃(u) μ̃(v) φ1(s·u) K(u,v) φ2(v)` for `s` in the ball.
/// `φ2` must vanish outside the stored kernel sources.
pub fn smeared_f(
    kernel: &InvariantKernel,
    phi1: &CoveringFunction,
    phi2: &CoveringFunction,
    radius: u64,
) -> Result<Flagged<GroupFunction>, SchulmanError> {
    let graph = kernel.graph();
    for f in [phi1, phi2] {
        if f.len() != graph.vertex_count() {
            return Err(CoveringError::Length {
                expected: graph.vertex_count(),
                found: f.len(),
            }
            .into());
        }
    }
    let k2 = kernel.apply(phi2)?;
    let ball = graph.spec().enumerate_ball(radius);
    let parts: Vec<(GroupElement, C64, Flags)> = ball
        .into_par_iter()
        .map(|s| -> Result<_, SchulmanError> {
            let pulled = pullback(graph, &s, phi1)?;
            let val: C64 = pulled
                .value
                .values()
                .iter()
                .zip(k2.values())
                .enumerate()
                .map(|(u, (a, b))| a * b * graph.measure(u))
                .sum();
            Ok((s, val, pulled.flags))
        })
        .collect::<Result<_, _>>()?;
    let mut flags = Flags::NONE;
    let mut out = GroupFunction::zero();
    for (s, v, fl) in parts {
        flags |= fl;
        out.set(s, v);
    }
    Ok(Flagged::new(out, flags))
}

/// `G(Λ) = Σ_{x,y} P_x K^Λ(x,y) Q_y` at every dual node.
pub fn smeared_g(
    fields: &[EquivariantKernel],
    graph: &CoveringGraph,
    grid: &DualGrid,
    phi1: &CoveringFunction,
    phi2: &CoveringFunction,
) -> Result<DualField, SchulmanError> {
    check_fields(fields, grid)?;
    let n = graph.base_len();
    let values: Vec<CMatrix> = fields
        .par_iter()
        .zip(grid.nodes())
        .map(|(f, node)| {
            let d = node.irrep.dim();
            let mut p = vec![CMatrix::zeros(d, d); n];
            let mut q = vec![CMatrix::zeros(d, d); n];
            for (c, g) in graph.window().iter().enumerate() {
                let lg = node.irrep.eval(g);
                let lg_inv = lg.adjoint();
                for y in 0..n {
                    let v = graph.vertex(c, y);
                    let mu = graph.measure(v);
                    let a = phi1.get(v);
                    if a != C64::new(0.0, 0.0) {
                        axpy(&mut p[y], a * mu, &lg);
                    }
                    let b = phi2.get(v);
                    if b != C64::new(0.0, 0.0) {
                        axpy(&mut q[y], b * mu, &lg_inv);
                    }
                }
            }
            let mut out = CMatrix::zeros(d, d);
            for (x, px) in p.iter().enumerate() {
                for (y, qy) in q.iter().enumerate() {
                    out += px * f.block(x, y) * qy;
                }
            }
            out
        })
        .collect();
    Ok(DualField::new(grid, values)?)
}

/// Both smeared objects for one pair of test functions.
pub fn smeared_pairing(
    kernel: &InvariantKernel,
    fields: &[EquivariantKernel],
    grid: &DualGrid,
    phi1: &CoveringFunction,
    phi2: &CoveringFunction,
    radius: u64,
) -> Result<SmearedPairing, SchulmanError> {
    let f = smeared_f(kernel, phi1, phi2, radius)?;
    let g = smeared_g(fields, kernel.graph(), grid, phi1, phi2)?;
    Ok(SmearedPairing {
        f: f.value,
        g,
        flags: f.flags,
    })
}

/// `(‖F − 𝓕⁻¹[G]‖_{ℓ²(ball)}, max_Λ ‖G − 𝓕[F]‖_HS)`.
pub fn roundtrip_defect(
    kernel: &InvariantKernel,
    fields: &[EquivariantKernel],
    grid: &DualGrid,
    phi1: &CoveringFunction,
    phi2: &CoveringFunction,
    radius: u64,
) -> Result<(Defect, Defect), SchulmanError> {
    let pair = smeared_pairing(kernel, fields, grid, phi1, phi2, radius)?;
    let support: Vec<GroupElement> = pair.f.iter().map(|(s, _)| s.clone()).collect();
    let f_back = inverse_fourier(&pair.g, grid, &support)?;
    let g_fwd = fourier(&pair.f, grid)?;
    let band = if grid.within_band(pair.f.support_radius(grid.spec())) {
        Flags::NONE
    } else {
        Flags::band()
    };
    let d1 = Defect::new(
        pair.f.distance_sqr(&f_back).sqrt(),
        pair.f.norm_sqr().sqrt(),
        f_back.norm_sqr().sqrt(),
    )
    .with_flags(pair.flags | band);
    let d2 = Defect::new(
        pair.g.max_node_distance(&g_fwd),
        pair.g.norm_sqr(grid).sqrt(),
        g_fwd.norm_sqr(grid).sqrt(),
    )
    .with_flags(pair.flags | band);
    Ok((d1, d2))
}

/// Splits `φ` into pieces that meet every fiber in at most one vertex, so
/// that `supp φ_i ∩ supp L_s* φ_i = ∅` for `s ≠ e`. The pieces sum to `φ`.
pub fn split_disjoint(graph: &CoveringGraph, phi: &CoveringFunction) -> Vec<CoveringFunction> {
    let n = graph.base_len();
    let mut used = vec![0usize; n];
    let mut pieces: Vec<CoveringFunction> = Vec::new();
    for (v, x) in phi.values().iter().enumerate() {
        if *x == C64::new(0.0, 0.0) {
            continue;
        }
        let y = v % n;
        let k = used[y];
        used[y] += 1;
        if pieces.len() <= k {
            pieces.push(CoveringFunction::zeros(graph));
        }
        pieces[k].set(v, *x);
    }
    pieces
}

/// Image side of the circle theta identity:
/// `Σ_{|n| ≤ N} e^{inθ} (4πτ)^{−1/2} exp(−(x − y − nL)²/(4τ))`.
pub fn theta_image_sum(x: f64, y: f64, tau: f64, theta: f64, length: f64, radius: u64) -> C64 {
    let r = radius as i64;
    let pref = (4.0 * PI * tau).powf(-0.5);
    (-r..=r)
        .map(|n| {
            let dx = x - y - n as f64 * length;
            C64::cis(n as f64 * theta) * pref * (-dx * dx / (4.0 * tau)).exp()
        })
        .sum()
}

/// Spectral side: `Σ_m (1/L) exp(−k_m² τ) exp(i k_m (x − y))` with
/// `k_m = (2πm + θ)/L`, summed until the Gaussian factor drops below
/// `1e-18` relative to the leading term.
pub fn theta_spectral_sum(x: f64, y: f64, tau: f64, theta: f64, length: f64) -> C64 {
    // |k| beyond sqrt(-ln(1e-18)/τ) contributes below the cutoff
    let kmax = (41.5 / tau).sqrt();
    let mmax = (kmax * length / (2.0 * PI)).ceil() as i64 + 1;
    (-mmax..=mmax)
        .map(|m| {
            let k = (2.0 * PI * m as f64 + theta) / length;
            C64::cis(k * (x - y)) * ((-k * k * tau).exp() / length)
        })
        .sum()
}

/// Torus version (product of two circles with twists `θ = (θ1, θ2)`).
pub fn torus_theta_image_sum(x: [f64; 2], y: [f64; 2], tau: f64, theta: [f64; 2], length: f64, radius: u64) -> C64 {
    theta_image_sum(x[0], y[0], tau, theta[0], length, radius)
        * theta_image_sum(x[1], y[1], tau, theta[1], length, radius)
}

pub fn torus_theta_spectral_sum(x: [f64; 2], y: [f64; 2], tau: f64, theta: [f64; 2], length: f64) -> C64 {
    theta_spectral_sum(x[0], y[0], tau, theta[0], length) * theta_spectral_sum(x[1], y[1], tau, theta[1], length)
}

/// One row of a tail report.
#[derive(Debug, Clone, Serialize)]
pub struct TailRecord {
    pub node: usize,
    pub radius: u64,
    pub last_shell: f64,
    pub tail: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{build_covering, micro_model, DomainConfig};
    use crate::group::GroupSpec;
    use crate::harmonic::{dual_grid, irrep_at, DualPoint};
    use crate::linalg::max_abs;
    use crate::operators::{assemble_invariant, assemble_twisted, heat_kernel, Potential, SpectralOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn micro_model_sign_image_sum() {
        let g = Arc::new(micro_model(2).unwrap());
        let h = assemble_invariant(&g, &Potential::zero(1)).unwrap();
        let grid = dual_grid(g.spec(), 1).unwrap();
        for tau in [0.05, 0.2, 1.0] {
            let k = heat_kernel(&h, tau).unwrap();
            let s = image_sum(&k, &grid.nodes()[1].irrep, 0, 0, 1).unwrap();
            assert!((s.value[(0, 0)] - c((-2.0 * tau).exp(), 0.0)).norm() < 1e-15);
            assert_eq!(s.tail, 0.0);
            let t = image_sum(&k, &grid.nodes()[0].irrep, 0, 0, 1).unwrap();
            assert!((t.value[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
            // ½[Tr K⁺ + Tr(Λ(s)* K⁻)] reproduces both entries
            let fields: Vec<EquivariantKernel> = grid
                .nodes()
                .iter()
                .map(|n| heat_kernel(&assemble_twisted(&g, &Potential::zero(1), &n.irrep).unwrap(), tau).unwrap())
                .collect();
            for s in g.window() {
                let back = reconstruct_invariant(&fields, &grid, s, 0, 0).unwrap();
                let u = g.act(&g.spec().inverse(s).unwrap(), 0).unwrap();
                assert!((back - k.get(u, 0).unwrap()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn trivial_group_identity() {
        let g = Arc::new(build_covering(&GroupSpec::cyclic(1).unwrap(), &DomainConfig::new(6, 1.0, 0)).unwrap());
        let v = Potential::cosine_well(&g, 1.0).unwrap();
        let h = assemble_invariant(&g, &v).unwrap();
        let k = heat_kernel(&h, 0.1).unwrap();
        let lam = Irrep::trivial(g.spec()).unwrap();
        let s = image_sum_kernel(&k, &lam, 0).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                assert_eq!(s.kernel.block(x, y)[(0, 0)], k.get(x, y).unwrap());
            }
        }
        let grid = dual_grid(g.spec(), 1).unwrap();
        let kl = heat_kernel(&assemble_twisted(&g, &v, &lam).unwrap(), 0.1).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                let r = reconstruct_invariant(std::slice::from_ref(&kl), &grid, &g.spec().identity(), x, y).unwrap();
                assert!((r - k.get(x, y).unwrap()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn z3_orientation_guard() {
        // a twist that is not real distinguishes Λ(s) from Λ(s⁻¹)
        let g = Arc::new(build_covering(&GroupSpec::cyclic(3).unwrap(), &DomainConfig::new(3, 1.0, 0)).unwrap());
        let v = Potential::table(vec![0.3, 1.1, -0.4]).unwrap();
        let h = assemble_invariant(&g, &v).unwrap();
        let k = heat_kernel(&h, 0.2).unwrap();
        let lam = irrep_at(g.spec(), DualPoint::Characters(vec![1])).unwrap();
        let direct = heat_kernel(&assemble_twisted(&g, &v, &lam).unwrap(), 0.2).unwrap();
        let images = image_sum_kernel(&k, &lam, 1).unwrap().kernel;
        assert!(max_abs(&(images.blocks() - direct.blocks())) < 1e-12);
        // the conjugate convention Σ Λ(s⁻¹) K(s⁻¹x, y) must fail
        let n = g.base_len();
        let mut wrong = CMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                for s in g.window() {
                    let u = g.act(&g.spec().inverse(s).unwrap(), g.rep(x)).unwrap();
                    wrong[(x, y)] += lam.evaluate(&g.spec().inverse(s).unwrap()).unwrap()[(0, 0)] * k.get(u, g.rep(y)).unwrap();
                }
            }
        }
        assert!(max_abs(&(wrong - direct.blocks())) > 1e-3);
    }

    #[test]
    fn real_time_refused_on_infinite_groups() {
        let spec = GroupSpec::free_abelian(1).unwrap();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(4, 1.0, 2)).unwrap());
        let h = assemble_invariant(&g, &Potential::zero(4)).unwrap();
        let lam = Irrep::trivial(&spec).unwrap();
        let u = h.kernel(KernelTime::Real(0.5)).unwrap();
        let err = image_sum(&u, &lam, 0, 0, 1).unwrap_err();
        assert!(matches!(err, SchulmanError::RealTimeRefused { .. }));
        assert!(err.to_string().contains("eps"));
        let uc = h.kernel(KernelTime::Complex { t: 0.5, eps: 0.1 }).unwrap();
        assert!(image_sum(&uc, &lam, 0, 0, 1).is_ok());
    }

    #[test]
    fn tail_bounds_remainder_on_line() {
        let spec = GroupSpec::free_abelian(1).unwrap();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(8, 1.0, 8)).unwrap());
        let h = assemble_invariant(&g, &Potential::zero(8)).unwrap();
        let sources: Vec<usize> = (0..8).map(|y| g.rep(y)).collect();
        let k = h.kernel_columns(KernelTime::Heat(0.1), &sources).unwrap();
        let lam = irrep_at(&spec, DualPoint::Torus(vec![1.0])).unwrap();
        let full = image_sum(&k, &lam, 2, 5, 7).unwrap();
        let mut last = f64::INFINITY;
        for r in 1..=3 {
            let part = image_sum(&k, &lam, 2, 5, r).unwrap();
            assert!(part.last_shell < last);
            last = part.last_shell;
            let remainder = frobenius(&(&full.value - &part.value));
            assert!(part.tail >= remainder, "r={r}: {} < {remainder}", part.tail);
        }
        let adaptive = image_sum_adaptive(&k, &lam, 2, 5, DEFAULT_EPS_TAIL, 7).unwrap();
        assert!(adaptive.radius < 7);
        assert!(frobenius(&(&full.value - &adaptive.value)) < 1e-12 * frobenius(&full.value));
    }

    #[test]
    fn theta_identity_value() {
        let a = theta_image_sum(0.0, 0.0, 0.05, 0.0, 1.0, 6);
        let b = theta_spectral_sum(0.0, 0.0, 0.05, 0.0, 1.0);
        assert!((a - b).norm() < 1e-12);
        assert!((a.re - 1.27857).abs() < 1e-5);
        let t = torus_theta_image_sum([0.1, 0.2], [0.7, 0.4], 0.1, [0.3, 2.0], 1.0, 6);
        let s = torus_theta_spectral_sum([0.1, 0.2], [0.7, 0.4], 0.1, [0.3, 2.0], 1.0);
        assert!((t - s).norm() < 1e-12);
    }

    #[test]
    fn smeared_examples_micro_model() {
        let g = Arc::new(micro_model(2).unwrap());
        let v = Potential::zero(1);
        let h = assemble_invariant(&g, &v).unwrap();
        let grid = dual_grid(g.spec(), 1).unwrap();
        let k = heat_kernel(&h, 0.3).unwrap();
        let fields: Vec<EquivariantKernel> = grid
            .nodes()
            .iter()
            .map(|n| heat_kernel(&assemble_twisted(&g, &v, &n.irrep).unwrap(), 0.3).unwrap())
            .collect();
        let d0 = CoveringFunction::delta(&g, 0).unwrap();
        let f = smeared_f(&k, &d0, &d0, 1).unwrap().value;
        // F(s) = K(s⁻¹·0, 0): s = e → K(0,0), s = 1 → K(1,0)
        for s in g.window() {
            let u = g.act(&g.spec().inverse(s).unwrap(), 0).unwrap();
            assert!((f.get(s) - k.get(u, 0).unwrap()).norm() < 1e-15);
        }
        let gg = smeared_g(&fields, &g, &grid, &d0, &d0).unwrap();
        for (j, m) in gg.values().iter().enumerate() {
            assert!((m[(0, 0)] - fields[j].block(0, 0)[(0, 0)]).norm() < 1e-15);
        }
        let (a, b) = roundtrip_defect(&k, &fields, &grid, &d0, &d0, 1).unwrap();
        assert!(a.value < 1e-14 && b.value < 1e-14);
        let zero = InvariantKernel::from_columns(g.clone(), KernelTime::Heat(0.3), vec![0, 1], CMatrix::zeros(2, 2)).unwrap();
        let zf: Vec<EquivariantKernel> = fields
            .iter()
            .map(|f| EquivariantKernel::from_blocks(f.irrep().clone(), f.time(), CMatrix::zeros(1, 1)).unwrap())
            .collect();
        let (a, b) = roundtrip_defect(&zero, &zf, &grid, &d0, &d0, 1).unwrap();
        assert_eq!((a.value, b.value), (0.0, 0.0));
    }

    #[test]
    fn identity_kernel_pattern() {
        let g = Arc::new(build_covering(&GroupSpec::cyclic(3).unwrap(), &DomainConfig::new(2, 1.0, 0)).unwrap());
        let n = g.vertex_count();
        let mu = g.measure(0);
        let id = InvariantKernel::from_columns(
            g.clone(),
            KernelTime::Heat(0.0),
            (0..n).collect(),
            CMatrix::identity(n, n) / C64::new(mu, 0.0),
        )
        .unwrap();
        // φ1 on (e, 0), φ2 on (1, 1): disjoint, and no translate meets φ2
        let p1 = CoveringFunction::delta(&g, g.rep(0)).unwrap();
        let one = g.spec().element(&[1]).unwrap();
        let p2 = CoveringFunction::delta(&g, g.vertex_of(&one, 1).unwrap()).unwrap();
        let f = smeared_f(&id, &p1, &p2, 1).unwrap().value;
        assert!(f.iter().all(|(_, v)| v.norm() == 0.0));
        // same fiber: only s with s·(1,0) = (e,0), i.e. s = 1⁻¹, survives
        let p3 = CoveringFunction::delta(&g, g.vertex_of(&one, 0).unwrap()).unwrap();
        let f = smeared_f(&id, &p1, &p3, 1).unwrap().value;
        for (s, v) in f.iter() {
            let expect = if *s == g.spec().inverse(&one).unwrap() { mu } else { 0.0 };
            assert!((v - c(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn bessel_bound_and_hs_bound() {
        let spec = GroupSpec::klein_bottle();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(2, 1.0, 4)).unwrap());
        let v = Potential::cosine_well(&g, 0.5).unwrap();
        let h = assemble_invariant(&g, &v).unwrap();
        let k = heat_kernel(&h, 0.2).unwrap();
        let grid = dual_grid(&spec, 6).unwrap();
        let irreps: Vec<&Irrep> = grid.nodes().iter().map(|n| &n.irrep).collect();
        let fields = crate::operators::twisted_kernels(&g, &v, &irreps, KernelTime::Heat(0.2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut phi = |r: u64| {
            let vals: Vec<C64> = (0..g.vertex_count())
                .map(|u| if g.copy_norm(u) <= r { c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) } else { c(0.0, 0.0) })
                .collect();
            CoveringFunction::from_values(&g, vals).unwrap()
        };
        let p1 = phi(1);
        let p2 = phi(1);
        let n1 = p1.norm_sqr(&g);
        let n2 = p2.norm_sqr(&g);
        for piece in split_disjoint(&g, &p1) {
            let f = smeared_f(&k, &piece, &p2, 2).unwrap();
            assert!(f.flags.is_clean());
            let total: f64 = f.value.iter().map(|(_, x)| x.norm_sqr()).sum();
            assert!(total <= piece.norm_sqr(&g) * n2 + 1e-12);
        }
        let pieces = split_disjoint(&g, &p1);
        let mut sum = CoveringFunction::zeros(&g);
        for p in &pieces {
            for u in 0..g.vertex_count() {
                sum.set(u, sum.get(u) + p.get(u));
            }
        }
        assert_eq!(sum, p1);
        let gg = smeared_g(&fields, &g, &grid, &p1, &p2).unwrap();
        for m in gg.values() {
            assert!(frobenius(m) <= 2.0 * (n1 * n2).sqrt() + 1e-12);
        }
    }
}
