//! The three check suites.

use crate::config::{Model, PotentialKind, RunConfig};
use crate::error::CliError;
use crate::report::{OutDir, Report, Timing};
use covbloch_core::bloch::{
    decomposition_defect, evolution_decomposition_defect, inversion_defect, potential_commutation_defect,
    spectral_union_defect, unitarity_defect,
};
use covbloch_core::covering::{CoveringFunction, CoveringGraph};
use covbloch_core::group::{GroupElement, GroupFamily, GroupSpec};
use covbloch_core::harmonic::{
    parseval_defect, regular_rep_defect, roundtrip_defect as fourier_roundtrip, DualGrid, GroupFunction, Irrep,
};
use covbloch_core::operators::{
    assemble_invariant, assemble_twisted, propagator, twisted_kernels, EquivariantKernel, InvariantHamiltonian,
    InvariantKernel, KernelTime, SpectralOperator, TwistedHamiltonian,
};
use covbloch_core::schulman::{
    image_sum_kernel, reconstruct_columns, roundtrip_defect as smeared_roundtrip, theta_image_sum,
    theta_spectral_sum, torus_theta_image_sum, torus_theta_spectral_sum,
};
use covbloch_core::{Defect, Flags, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Which subcommand to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    CheckHarmonic,
    Bloch,
    Schulman,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::CheckHarmonic => "check-harmonic",
            CommandKind::Bloch => "bloch",
            CommandKind::Schulman => "schulman",
        }
    }
}

/// Coarse group class; selects default tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Finite,
    Lattice,
    Klein,
}

fn class(spec: &GroupSpec) -> Class {
    match spec.family() {
        GroupFamily::KleinBottle => Class::Klein,
        GroupFamily::FreeAbelian(_) => Class::Lattice,
        _ => Class::Finite,
    }
}

/// Shared state of one run.
pub struct Run<'a> {
    pub config: &'a RunConfig,
    pub scale: f64,
    pub out: &'a OutDir,
    pub report: Report,
    pub timing: Timing,
}

impl Run<'_> {
    fn tol(&self, name: &str, default: f64) -> f64 {
        self.config.task.tolerances.get(name).copied().unwrap_or(default) * self.scale
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.config.task.seed);
        r.set_stream(stream);
        r
    }

    fn check(&mut self, name: &str, context: impl Into<String>, defect: &Defect, default_tol: f64) {
        let tol = self.tol(name, default_tol);
        self.report.push(name, context, defect, tol);
    }
}

fn crand(r: &mut ChaCha8Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn worst(defects: impl IntoIterator<Item = Defect>) -> Defect {
    defects.into_iter().fold(Defect::zero(), Defect::max)
}

/// Elements carrying random test functions: the whole group when finite,
/// otherwise the ball of the support radius.
fn test_support(spec: &GroupSpec, support_radius: u64) -> Vec<GroupElement> {
    match spec.diameter() {
        Some(d) => spec.enumerate_ball(d),
        None => spec.enumerate_ball(support_radius),
    }
}

fn random_group_function(support: &[GroupElement], r: &mut ChaCha8Rng) -> GroupFunction {
    GroupFunction::from_pairs(support.iter().map(|g| (g.clone(), crand(r))))
}

/// Unit-norm random function on copies of norm at most `radius` (every
/// copy for finite groups).
fn random_function(graph: &CoveringGraph, r: &mut ChaCha8Rng, radius: Option<u64>) -> Result<CoveringFunction, CliError> {
    let finite = graph.spec().is_finite();
    let vals: Vec<C64> = (0..graph.vertex_count())
        .map(|v| {
            let keep = finite || radius.is_some_and(|rad| graph.copy_norm(v) <= rad);
            if keep {
                crand(r)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let f = CoveringFunction::from_values(graph, vals)?;
    let n = f.norm_sqr(graph).sqrt();
    Ok(CoveringFunction::from_values(
        graph,
        f.values().iter().map(|x| x / n).collect(),
    )?)
}

fn write_manifest(out: &OutDir, grid: &DualGrid) -> Result<(), CliError> {
    let m = grid.manifest();
    let width = m.nodes.iter().map(|n| n.params.len()).max().unwrap_or(0);
    let mut w = out.csv("manifest.csv")?;
    let mut header = vec!["index".to_string(), "dim".into(), "weight".into()];
    header.extend((0..width).map(|i| format!("p{i}")));
    w.write_record(&header)?;
    for n in &m.nodes {
        let mut row = vec![n.index.to_string(), n.dim.to_string(), n.weight.to_string()];
        row.extend(n.params.iter().map(|p| p.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn check_harmonic(run: &mut Run, model: &Model) -> Result<(), CliError> {
    let spec = &model.spec;
    let grid = &model.grid;
    let cls = class(spec);
    let quad_tol = if cls == Class::Klein { 1e-8 } else { 1e-12 };
    run.timing.phase("irreps");
    let support = test_support(spec, run.config.task.support_radius);
    let hom = grid
        .nodes()
        .par_iter()
        .map(|n| n.irrep.homomorphism_defect(&support))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    run.check(
        "irrep_homomorphism",
        format!("elements={}", support.len()),
        &Defect::new(hom, 0.0, 0.0),
        1e-13,
    );

    run.timing.phase("parseval");
    let mut r = run.rng(1);
    let mut pars = Vec::new();
    let mut trips = Vec::new();
    let mut regs = Vec::new();
    let shift = generator(spec);
    for _ in 0..run.config.task.samples {
        let f1 = random_group_function(&support, &mut r);
        let f2 = random_group_function(&support, &mut r);
        pars.push(parseval_defect(&f1, &f2, grid)?);
        trips.push(fourier_roundtrip(&f1, grid)?);
        regs.push(regular_rep_defect(&f1, &shift, grid)?);
    }
    let ctx = format!("support={}", support.len());
    run.check("parseval", ctx.clone(), &worst(pars), quad_tol);
    run.check("fourier_roundtrip", ctx.clone(), &worst(trips), quad_tol);
    run.check("regular_representation", format!("{ctx},s={shift}"), &worst(regs), quad_tol);

    run.timing.phase("plancherel");
    let ps = grid.plancherel_sum();
    let tol = run.tol("plancherel_integral", quad_tol);
    run.report.push_with_value(
        "plancherel_integral",
        format!("nodes={}", grid.len()),
        &Defect::new((ps - 1.0).abs(), ps, 1.0),
        tol,
        Some(ps),
    );
    let mass = grid.total_mass();
    let tol = run.tol("total_mass", 1e-12);
    run.report.push_with_value(
        "total_mass",
        format!("nodes={}", grid.len()),
        &Defect::new((mass - 1.0).max(0.0), mass, 1.0),
        tol,
        Some(mass),
    );
    run.timing.phase("output");
    write_manifest(run.out, grid)
}

/// First generator of the group (the identity for the trivial group).
fn generator(spec: &GroupSpec) -> GroupElement {
    let mut coords = vec![0i64; spec.rank()];
    if let Some(c) = coords.first_mut() {
        *c = 1;
    }
    spec.element(&coords).unwrap_or_else(|_| spec.identity())
}

fn twisted_family(model: &Model) -> Result<Vec<TwistedHamiltonian>, CliError> {
    Ok(model
        .grid
        .nodes()
        .par_iter()
        .map(|n| assemble_twisted(&model.graph, &model.potential, &n.irrep))
        .collect::<Result<Vec<_>, _>>()?)
}

pub fn bloch(run: &mut Run, model: &Model) -> Result<(), CliError> {
    model.require_twisted_eigen()?;
    let finite = model.spec.is_finite();
    if finite {
        model.require_invariant_eigen("the spectral union")?;
    }
    if !run.config.task.t.is_empty() {
        model.require_invariant_eigen("the evolution decomposition")?;
    }
    let graph = &model.graph;
    let grid = &model.grid;
    run.timing.phase("assemble");
    let h = assemble_invariant(graph, &model.potential)?;
    let twisted = twisted_family(model)?;

    run.timing.phase("transform");
    let mut r = run.rng(2);
    let radius = Some(run.config.task.support_radius);
    let fs: Vec<CoveringFunction> = (0..run.config.task.samples)
        .map(|_| random_function(graph, &mut r, radius))
        .collect::<Result<_, _>>()?;
    let ctx = format!("samples={}", fs.len());
    let mut unit = Vec::new();
    let mut inv = Vec::new();
    let mut dec = Vec::new();
    let mut pot = Vec::new();
    for f in &fs {
        unit.push(unitarity_defect(graph, f, grid)?);
        inv.push(inversion_defect(graph, f, grid)?);
        dec.push(decomposition_defect(&h, &twisted, f, grid)?);
        pot.push(potential_commutation_defect(graph, &model.potential, f, grid)?);
    }
    run.check("bloch_unitarity", ctx.clone(), &worst(unit), 1e-12);
    run.check("bloch_inversion", ctx.clone(), &worst(inv), 1e-12);
    run.check("hamiltonian_decomposition", ctx.clone(), &worst(dec), 1e-10);
    run.check("potential_commutation", ctx.clone(), &worst(pot), 1e-12);

    if !run.config.task.t.is_empty() {
        run.timing.phase("evolution");
        for &t in &run.config.task.t.clone() {
            // On a truncated window U(t) reflects off the boundary, so the
            // decomposition identity only holds exactly for finite groups.
            if finite {
                let mut evo = Vec::new();
                for f in &fs {
                    evo.push(evolution_decomposition_defect(&h, &twisted, f, grid, KernelTime::Real(t))?);
                }
                run.check("evolution_decomposition", format!("t={t}"), &worst(evo), 1e-10);
            }
            let u = propagator(&h, t)?.unitarity_defect()?;
            run.check("propagator_unitarity", format!("t={t}"), &Defect::new(u, 0.0, 0.0), 1e-11);
        }
    }

    run.timing.phase("spectra");
    let bands: Vec<Vec<f64>> = twisted
        .par_iter()
        .map(|t| t.spectrum())
        .collect::<Result<_, _>>()?;
    if finite {
        let d = spectral_union_defect(&h, &twisted, grid)?;
        run.check("spectral_union", format!("eigenvalues={}", graph.vertex_count()), &d, 1e-10);
        let lhs = h.spectrum()?;
        let mut rhs: Vec<f64> = Vec::new();
        for (b, t) in bands.iter().zip(&twisted) {
            for _ in 0..t.irrep().dim() {
                rhs.extend_from_slice(b);
            }
        }
        rhs.sort_by(f64::total_cmp);
        let mut w = run.out.csv("spectra.csv")?;
        w.write_record(["index", "invariant", "union"])?;
        for (i, (a, b)) in lhs.iter().zip(&rhs).enumerate() {
            w.write_record([i.to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(d) = free_dispersion(run.config, model, &bands) {
        run.check("free_dispersion", format!("nodes={}", grid.len()), &d, 1e-10);
    }

    run.timing.phase("output");
    let mut w = run.out.csv("bands.csv")?;
    let width = grid.nodes().iter().map(|n| n.irrep.point().as_vec().len()).max().unwrap_or(0);
    let mut header = vec!["node".to_string(), "weight".into()];
    header.extend((0..width).map(|i| format!("p{i}")));
    header.extend(["band".to_string(), "eigenvalue".into()]);
    w.write_record(&header)?;
    for (k, (node, b)) in grid.nodes().iter().zip(&bands).enumerate() {
        let params = node.irrep.point().as_vec();
        for (j, l) in b.iter().enumerate() {
            let mut row = vec![k.to_string(), node.weight.to_string()];
            row.extend(params.iter().map(|p| p.to_string()));
            row.extend([j.to_string(), l.to_string()]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    write_manifest(run.out, grid)
}

/// For the line with a zero or constant potential the twisted spectra are
/// `4/h² sin²((2πj + θ)/(2m)) + c`.
fn free_dispersion(config: &RunConfig, model: &Model, bands: &[Vec<f64>]) -> Option<Defect> {
    if !matches!(model.spec.family(), GroupFamily::FreeAbelian(1)) {
        return None;
    }
    let c = match config.potential.kind {
        PotentialKind::Zero => 0.0,
        PotentialKind::Constant => config.potential.value?,
        _ => return None,
    };
    let m = config.grid.nodes_per_cell;
    let h = config.grid.cell_length / m as f64;
    let mut out = Defect::zero();
    for (node, b) in model.grid.nodes().iter().zip(bands) {
        let theta = node.irrep.point().as_vec()[0];
        let mut expect: Vec<f64> = (0..m)
            .map(|j| {
                let s = ((2.0 * PI * j as f64 + theta) / (2.0 * m as f64)).sin();
                4.0 / (h * h) * s * s + c
            })
            .collect();
        expect.sort_by(f64::total_cmp);
        let dev = b.iter().zip(&expect).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out = out.max(Defect::new(dev, norm(b), norm(&expect)));
    }
    Some(out)
}

fn times(config: &RunConfig, spec: &GroupSpec) -> Result<Vec<KernelTime>, CliError> {
    let mut out: Vec<KernelTime> = config.task.tau.iter().map(|&t| KernelTime::Heat(t)).collect();
    for &t in &config.task.t {
        out.push(match (spec.is_finite(), config.task.eps) {
            (true, None) => KernelTime::Real(t),
            (_, Some(eps)) => KernelTime::Complex { t, eps },
            (false, None) => {
                return Err(CliError::Validation(format!(
                    "real-time image sums over the infinite group {} do not converge pointwise; \
                     set task.eps > 0 to use complex time t - i*eps",
                    spec.description()
                )))
            }
        });
    }
    if out.is_empty() {
        return Err(CliError::Validation("task.tau and task.t are both empty".into()));
    }
    Ok(out)
}

fn time_label(time: KernelTime) -> String {
    match time {
        KernelTime::Heat(t) => format!("tau={t}"),
        KernelTime::Real(t) => format!("t={t}"),
        KernelTime::Complex { t, eps } => format!("t={t},eps={eps}"),
    }
}

fn invariant_kernel(h: &InvariantHamiltonian, model: &Model, time: KernelTime) -> Result<InvariantKernel, CliError> {
    let graph = &model.graph;
    if graph.spec().is_finite() {
        model.require_invariant_eigen("a full kernel on a finite group")?;
        Ok(h.kernel(time)?)
    } else {
        if !time.is_heat() {
            model.require_invariant_eigen("a complex-time kernel")?;
        }
        let sources: Vec<usize> = (0..graph.base_len()).map(|y| graph.rep(y)).collect();
        Ok(h.kernel_columns(time, &sources)?)
    }
}

fn max_abs(m: &covbloch_core::CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn schulman(run: &mut Run, model: &Model) -> Result<(), CliError> {
    let spec = &model.spec;
    let times = times(run.config, spec)?;
    model.require_twisted_eigen()?;
    let graph = &model.graph;
    let grid = &model.grid;
    let cls = class(spec);
    let ball = run.config.ball_radius(spec);
    // F(s) pairs a kernel with a test function supported out to the support
    // radius, so it needs that many more shells than the image sum; shifted
    // test functions must stay inside the window.
    let support = run.config.task.support_radius;
    let pair_ball = if spec.is_finite() {
        ball
    } else {
        (ball + support).min(run.config.grid.window_radius - support)
    };
    let (image_tol, recon_tol, trip_tol) = match cls {
        Class::Finite => (1e-10, 1e-10, 1e-10),
        _ => (1e-8, 1e-6, 1e-8),
    };
    run.timing.phase("assemble");
    let h = assemble_invariant(graph, &model.potential)?;
    let irreps: Vec<&Irrep> = grid.nodes().iter().map(|n| &n.irrep).collect();

    let mut r = run.rng(3);
    let mut kernel_rows = Vec::new();
    let mut tail_rows = Vec::new();
    for &time in &times {
        let label = time_label(time);
        run.timing.phase(&format!("kernels[{label}]"));
        let k = invariant_kernel(&h, model, time)?;
        let direct = twisted_kernels(graph, &model.potential, &irreps, time)?;

        run.timing.phase(&format!("images[{label}]"));
        let sums = irreps
            .par_iter()
            .map(|l| image_sum_kernel(&k, l, ball))
            .collect::<Result<Vec<_>, _>>()?;
        let mut image = Defect::zero();
        for (node, (s, d)) in sums.iter().zip(&direct).enumerate() {
            let dev = max_abs(&(s.kernel.blocks() - d.blocks()));
            image = image.max(
                Defect::new(dev, max_abs(s.kernel.blocks()), max_abs(d.blocks())).with_flags(s.flags),
            );
            tail_rows.push((node, label.clone(), s.radius, s.tail));
        }
        run.check("image_sum", format!("{label},ball={ball}"), &image, image_tol);
        for &node in &run.config.output.kernel_nodes {
            kernel_rows.push((node, label.clone(), sums[node].kernel.clone(), direct[node].clone()));
        }

        run.timing.phase(&format!("reconstruction[{label}]"));
        let back = reconstruct_columns(&direct, grid, graph)?;
        let mut dev = 0.0f64;
        let mut norm = 0.0f64;
        for (j, &src) in back.sources().iter().enumerate() {
            for u in 0..graph.vertex_count() {
                let kv = k.get(u, src).ok_or_else(|| CliError::Numerical(format!("missing kernel column {src}")))?;
                dev = dev.max((back.values()[(u, j)] - kv).norm());
                norm = norm.max(kv.norm());
            }
        }
        // the dual quadrature aliases copies g and g·(M-periodic shifts);
        // outside the exactness band that aliasing is no longer negligible
        let band = match graph.window_radius() {
            Some(r) if !grid.within_band(r) => Flags::band(),
            _ => Flags::NONE,
        };
        run.check(
            "reconstruction",
            label.clone(),
            &Defect::new(dev, max_abs(back.values()), norm).with_flags(band),
            recon_tol,
        );

        run.timing.phase(&format!("smeared[{label}]"));
        let mut fd = Vec::new();
        let mut gd = Vec::new();
        for _ in 0..run.config.task.samples {
            let p1 = random_function(graph, &mut r, Some(support))?;
            let p2 = random_function(graph, &mut r, Some(0))?;
            let (a, b) = smeared_roundtrip(&k, &direct, grid, &p1, &p2, pair_ball)?;
            fd.push(a);
            gd.push(b);
        }
        run.check("smeared_f_roundtrip", format!("{label},ball={pair_ball}"), &worst(fd), trip_tol);
        run.check("smeared_g_roundtrip", format!("{label},ball={pair_ball}"), &worst(gd), trip_tol);
    }

    run.timing.phase("theta");
    theta_checks(run, model, &times, ball)?;

    run.timing.phase("output");
    let mut w = run.out.csv("kernels.csv")?;
    w.write_record([
        "node", "time", "x", "y", "row", "col", "image_re", "image_im", "direct_re", "direct_im",
    ])?;
    for (node, label, image, direct) in &kernel_rows {
        write_kernel_rows(&mut w, *node, label, image, direct)?;
    }
    w.flush()?;
    let mut w = run.out.csv("tails.csv")?;
    w.write_record(["node", "time", "radius", "tail"])?;
    for (node, label, radius, tail) in &tail_rows {
        w.write_record([node.to_string(), label.clone(), radius.to_string(), tail.to_string()])?;
    }
    w.flush()?;
    write_manifest(run.out, grid)
}

fn write_kernel_rows(
    w: &mut csv::Writer<std::fs::File>,
    node: usize,
    label: &str,
    image: &EquivariantKernel,
    direct: &EquivariantKernel,
) -> Result<(), CliError> {
    let d = image.irrep().dim();
    let n = image.base_len();
    let (a, b) = (image.blocks(), direct.blocks());
    for x in 0..n {
        for y in 0..n {
            for i in 0..d {
                for j in 0..d {
                    let (p, q) = (a[(x * d + i, y * d + j)], b[(x * d + i, y * d + j)]);
                    w.write_record([
                        node.to_string(),
                        label.to_string(),
                        x.to_string(),
                        y.to_string(),
                        i.to_string(),
                        j.to_string(),
                        p.re.to_string(),
                        p.im.to_string(),
                        q.re.to_string(),
                        q.im.to_string(),
                    ])?;
                }
            }
        }
    }
    Ok(())
}

/// Continuum theta identity on the circle (rank 1) and torus (rank 2).
fn theta_checks(run: &mut Run, model: &Model, times: &[KernelTime], ball: u64) -> Result<(), CliError> {
    let rank = match model.spec.family() {
        GroupFamily::FreeAbelian(d) if *d <= 2 => *d,
        _ => return Ok(()),
    };
    let length = run.config.grid.cell_length;
    let nt = run.config.task.theta_count;
    let np = run.config.task.grid_points;
    let mut rows = Vec::new();
    for &time in times {
        let KernelTime::Heat(tau) = time else { continue };
        let thetas: Vec<f64> = (0..nt).map(|k| 2.0 * PI * k as f64 / nt as f64).collect();
        let pts: Vec<f64> = (0..np).map(|i| length * i as f64 / np as f64).collect();
        let mut dev = 0.0f64;
        let mut norm = 0.0f64;
        for &th in &thetas {
            for &x in &pts {
                for &y in &pts {
                    let (a, b) = if rank == 1 {
                        (
                            theta_image_sum(x, y, tau, th, length, ball),
                            theta_spectral_sum(x, y, tau, th, length),
                        )
                    } else {
                        // second axis: shifted twist and points, so both axes vary
                        let th2 = thetas[(thetas.len() / 2 + 1) % thetas.len()] - th;
                        (
                            torus_theta_image_sum([x, y], [y, x], tau, [th, th2], length, ball),
                            torus_theta_spectral_sum([x, y], [y, x], tau, [th, th2], length),
                        )
                    };
                    dev = dev.max((a - b).norm());
                    norm = norm.max(a.norm());
                    rows.push((tau, th, x, y, a, b));
                }
            }
        }
        run.check(
            "theta_identity",
            format!("tau={tau},ball={ball},rank={rank}"),
            &Defect::new(dev, norm, norm),
            1e-10,
        );
    }
    if rows.is_empty() {
        return Ok(());
    }
    let mut w = run.out.csv("theta.csv")?;
    w.write_record(["tau", "theta", "x", "y", "image_re", "image_im", "spectral_re", "spectral_im"])?;
    for (tau, th, x, y, a, b) in rows {
        w.write_record([
            tau.to_string(),
            th.to_string(),
            x.to_string(),
            y.to_string(),
            a.re.to_string(),
            a.im.to_string(),
            b.re.to_string(),
            b.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
