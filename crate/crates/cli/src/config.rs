//! Run configuration: schema, validation and model construction.
//!
//! Every block rejects unknown keys. All numeric parameters are checked
//! against the library preconditions before any computation starts.

use crate::error::CliError;
use covbloch_core::covering::{build_covering, projected_vertex_count, CoveringGraph, DomainConfig};
use covbloch_core::group::{GroupFamily, GroupSpec};
use covbloch_core::harmonic::{dual_grid, DualGrid};
use covbloch_core::operators::{Potential, DENSE_EIGEN_LIMIT};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Largest covering graph a run may build.
pub const MAX_VERTICES: u128 = 20_000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub potential: PotentialBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cyclic,
    Product,
    FreeAbelian,
    KleinBottle,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupBlock {
    pub family: Family,
    /// Order `n` of `cyclic`.
    pub order: Option<u32>,
    /// Factor orders of `product`.
    pub orders: Option<Vec<u32>>,
    /// Rank `d` of `free_abelian`.
    pub rank: Option<usize>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Nodes per cell along each axis (`m`).
    pub nodes_per_cell: usize,
    /// Cell length `L`.
    #[serde(default = "one")]
    pub cell_length: f64,
    /// Copy window radius; required (and at least 1) for infinite groups.
    #[serde(default)]
    pub window_radius: u64,
    /// Dual quadrature resolution `M`; ignored for finite groups.
    #[serde(default = "sixteen")]
    pub dual_resolution: usize,
    /// Node offset in units of the spacing, one entry per axis.
    #[serde(default)]
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Zero,
    Constant,
    CosineWell,
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    #[serde(default)]
    pub kind: PotentialKind,
    /// Value of a `constant` potential.
    pub value: Option<f64>,
    /// Amplitude of the `cosine_well`.
    pub amplitude: Option<f64>,
    /// One value per fundamental-domain node for `table`.
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    /// Heat times.
    #[serde(default = "default_tau")]
    pub tau: Vec<f64>,
    /// Real times.
    #[serde(default)]
    pub t: Vec<f64>,
    /// Damping of complex time `t − iε`, required for real times on
    /// infinite groups in `schulman`.
    pub eps: Option<f64>,
    /// Image-sum ball radius; defaults to the diameter of a finite group
    /// and to the window radius otherwise.
    pub ball_radius: Option<u64>,
    /// Support radius of random test functions on infinite groups.
    #[serde(default = "one_u64")]
    pub support_radius: u64,
    /// Seed of the random test functions.
    #[serde(default)]
    pub seed: u64,
    /// Number of random test functions (pairs) per check.
    #[serde(default = "three")]
    pub samples: usize,
    /// Number of twist angles in the theta comparison.
    #[serde(default = "eight")]
    pub theta_count: usize,
    /// Points per axis of the theta comparison grid.
    #[serde(default = "eight")]
    pub grid_points: usize,
    /// Per-check tolerance overrides, keyed by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            tau: default_tau(),
            t: Vec::new(),
            eps: None,
            ball_radius: None,
            support_radius: 1,
            seed: 0,
            samples: 3,
            theta_count: 8,
            grid_points: 8,
            tolerances: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Output directory; `--out` takes precedence.
    pub directory: Option<String>,
    /// Data formats; only `csv` is supported.
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    /// Dual-grid nodes whose kernels are written to `kernels.csv`.
    #[serde(default = "default_kernel_nodes")]
    pub kernel_nodes: Vec<usize>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            formats: default_formats(),
            kernel_nodes: default_kernel_nodes(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn three() -> usize {
    3
}
fn eight() -> usize {
    8
}
fn sixteen() -> usize {
    16
}
fn default_tau() -> Vec<f64> {
    vec![0.05, 0.2, 1.0]
}
fn default_formats() -> Vec<String> {
    vec!["csv".into()]
}
fn default_kernel_nodes() -> Vec<usize> {
    vec![0]
}

/// Names accepted in `[task.tolerances]`.
pub const CHECK_NAMES: &[&str] = &[
    "irrep_homomorphism",
    "parseval",
    "fourier_roundtrip",
    "regular_representation",
    "plancherel_integral",
    "total_mass",
    "bloch_unitarity",
    "bloch_inversion",
    "hamiltonian_decomposition",
    "potential_commutation",
    "evolution_decomposition",
    "propagator_unitarity",
    "spectral_union",
    "free_dispersion",
    "image_sum",
    "reconstruction",
    "smeared_f_roundtrip",
    "smeared_g_roundtrip",
    "theta_identity",
];

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn group_spec(&self) -> Result<GroupSpec, CliError> {
        let g = &self.group;
        let unexpected = |key: &str, present: bool| {
            if present {
                Err(invalid(format!("group.{key} does not apply to family {:?}", g.family)))
            } else {
                Ok(())
            }
        };
        let spec = match g.family {
            Family::Cyclic => {
                unexpected("orders", g.orders.is_some())?;
                unexpected("rank", g.rank.is_some())?;
                let n = g.order.ok_or_else(|| invalid("group.order is required for cyclic"))?;
                GroupSpec::cyclic(n)
            }
            Family::Product => {
                unexpected("order", g.order.is_some())?;
                unexpected("rank", g.rank.is_some())?;
                let orders = g.orders.as_ref().ok_or_else(|| invalid("group.orders is required for product"))?;
                GroupSpec::product(orders)
            }
            Family::FreeAbelian => {
                unexpected("order", g.order.is_some())?;
                unexpected("orders", g.orders.is_some())?;
                let d = g.rank.ok_or_else(|| invalid("group.rank is required for free_abelian"))?;
                GroupSpec::free_abelian(d)
            }
            Family::KleinBottle => {
                unexpected("order", g.order.is_some())?;
                unexpected("orders", g.orders.is_some())?;
                unexpected("rank", g.rank.is_some())?;
                Ok(GroupSpec::klein_bottle())
            }
        }
        .map_err(|e| invalid(format!("group: {e}")))?;
        Ok(match &g.description {
            Some(d) => spec.with_description(d.clone()),
            None => spec,
        })
    }

    pub fn domain(&self) -> DomainConfig {
        DomainConfig::new(self.grid.nodes_per_cell, self.grid.cell_length, self.grid.window_radius)
            .with_offset(self.grid.offset.clone())
    }

    /// Checks everything that can be checked without building the model.
    pub fn validate(&self, spec: &GroupSpec) -> Result<(), CliError> {
        let grid = &self.grid;
        if grid.nodes_per_cell == 0 {
            return Err(invalid("grid.nodes_per_cell must be at least 1"));
        }
        if !(grid.cell_length.is_finite() && grid.cell_length > 0.0) {
            return Err(invalid(format!("grid.cell_length must be positive, got {}", grid.cell_length)));
        }
        if grid.dual_resolution == 0 {
            return Err(invalid("grid.dual_resolution must be at least 1"));
        }
        if !spec.is_finite() && grid.window_radius == 0 {
            return Err(invalid("grid.window_radius must be at least 1 for infinite groups"));
        }
        let count = projected_vertex_count(spec, &self.domain())
            .ok_or_else(|| invalid("grid: vertex count overflows"))?;
        if count > MAX_VERTICES {
            return Err(invalid(format!(
                "grid: the covering graph would have {count} vertices, above the cap of {MAX_VERTICES}"
            )));
        }
        let task = &self.task;
        if let Some(bad) = task.tau.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(invalid(format!("task.tau entries must be positive, got {bad}")));
        }
        if let Some(bad) = task.t.iter().find(|t| !t.is_finite()) {
            return Err(invalid(format!("task.t entries must be finite, got {bad}")));
        }
        if let Some(eps) = task.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(invalid(format!("task.eps must be positive, got {eps}")));
            }
        }
        if task.samples == 0 {
            return Err(invalid("task.samples must be at least 1"));
        }
        if task.theta_count == 0 || task.grid_points == 0 {
            return Err(invalid("task.theta_count and task.grid_points must be at least 1"));
        }
        if !spec.is_finite() && task.support_radius >= grid.window_radius {
            return Err(invalid(format!(
                "task.support_radius {} must be below grid.window_radius {} so test functions stay interior",
                task.support_radius, grid.window_radius
            )));
        }
        if let (Some(b), false) = (task.ball_radius, spec.is_finite()) {
            if b > grid.window_radius {
                return Err(invalid(format!(
                    "task.ball_radius {b} exceeds grid.window_radius {}",
                    grid.window_radius
                )));
            }
        }
        for (name, tol) in &task.tolerances {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(invalid(format!(
                    "task.tolerances: unknown check {name:?}; known checks: {}",
                    CHECK_NAMES.join(", ")
                )));
            }
            if !(tol.is_finite() && *tol > 0.0) {
                return Err(invalid(format!("task.tolerances.{name} must be positive, got {tol}")));
            }
        }
        if let Some(f) = self.output.formats.iter().find(|f| f.as_str() != "csv") {
            return Err(invalid(format!("output.formats: unsupported format {f:?} (only \"csv\")")));
        }
        let base = base_len(spec, grid.nodes_per_cell);
        self.potential_for(base)?;
        Ok(())
    }

    pub fn ball_radius(&self, spec: &GroupSpec) -> u64 {
        match (self.task.ball_radius, spec.diameter()) {
            (Some(b), Some(d)) => b.min(d),
            (Some(b), None) => b,
            (None, Some(d)) => d,
            (None, None) => self.grid.window_radius,
        }
    }

    fn potential_for(&self, base: usize) -> Result<Option<Potential>, CliError> {
        let p = &self.potential;
        let stray = |key: &str, present: bool| {
            if present {
                Err(invalid(format!("potential.{key} does not apply to kind {:?}", p.kind)))
            } else {
                Ok(())
            }
        };
        let op = |r: Result<Potential, covbloch_core::operators::OperatorError>| {
            r.map_err(|e| invalid(format!("potential: {e}")))
        };
        match p.kind {
            PotentialKind::Zero => {
                stray("value", p.value.is_some())?;
                stray("amplitude", p.amplitude.is_some())?;
                stray("values", p.values.is_some())?;
                Ok(Some(Potential::zero(base)))
            }
            PotentialKind::Constant => {
                stray("amplitude", p.amplitude.is_some())?;
                stray("values", p.values.is_some())?;
                let c = p.value.ok_or_else(|| invalid("potential.value is required for constant"))?;
                op(Potential::constant(base, c)).map(Some)
            }
            PotentialKind::CosineWell => {
                stray("value", p.value.is_some())?;
                stray("values", p.values.is_some())?;
                let a = p.amplitude.ok_or_else(|| invalid("potential.amplitude is required for cosine_well"))?;
                if !a.is_finite() {
                    return Err(invalid("potential.amplitude must be finite"));
                }
                // needs node coordinates, built with the graph
                Ok(None)
            }
            PotentialKind::Table => {
                stray("value", p.value.is_some())?;
                stray("amplitude", p.amplitude.is_some())?;
                let v = p.values.clone().ok_or_else(|| invalid("potential.values is required for table"))?;
                if v.len() != base {
                    return Err(invalid(format!(
                        "potential.values has {} entries, the fundamental domain has {base} nodes",
                        v.len()
                    )));
                }
                op(Potential::table(v)).map(Some)
            }
        }
    }
}

fn base_len(spec: &GroupSpec, m: usize) -> usize {
    let dim = match spec.family() {
        GroupFamily::FiniteProduct(ns) => ns.len(),
        _ => spec.rank(),
    };
    m.pow(dim as u32)
}

/// Everything a command needs, built from a validated configuration.
pub struct Model {
    pub spec: GroupSpec,
    pub graph: Arc<CoveringGraph>,
    pub grid: DualGrid,
    pub potential: Potential,
}

impl Model {
    pub fn build(config: &RunConfig) -> Result<Self, CliError> {
        let spec = config.group_spec()?;
        config.validate(&spec)?;
        let graph = Arc::new(
            build_covering(&spec, &config.domain()).map_err(|e| invalid(format!("grid: {e}")))?,
        );
        let resolution = if spec.is_finite() { 1 } else { config.grid.dual_resolution };
        let grid = dual_grid(&spec, resolution).map_err(|e| invalid(format!("dual grid: {e}")))?;
        let potential = match config.potential_for(graph.base_len())? {
            Some(p) => p,
            None => Potential::cosine_well(&graph, config.potential.amplitude.unwrap_or(0.0))
                .map_err(|e| invalid(format!("potential: {e}")))?,
        };
        for &k in &config.output.kernel_nodes {
            if k >= grid.len() {
                return Err(invalid(format!(
                    "output.kernel_nodes: node {k} does not exist (the dual grid has {} nodes)",
                    grid.len()
                )));
            }
        }
        Ok(Model { spec, graph, grid, potential })
    }

    /// Size of the largest twisted Hamiltonian.
    pub fn twisted_dim(&self) -> usize {
        let d = self.grid.nodes().iter().map(|n| n.irrep.dim()).max().unwrap_or(1);
        self.graph.base_len() * d
    }

    pub fn require_twisted_eigen(&self) -> Result<(), CliError> {
        if self.twisted_dim() > DENSE_EIGEN_LIMIT {
            return Err(invalid(format!(
                "grid: twisted Hamiltonians of dimension {} exceed the dense eigensolver limit {DENSE_EIGEN_LIMIT}",
                self.twisted_dim()
            )));
        }
        Ok(())
    }

    pub fn require_invariant_eigen(&self, why: &str) -> Result<(), CliError> {
        if self.graph.vertex_count() > DENSE_EIGEN_LIMIT {
            return Err(invalid(format!(
                "{why} needs a dense eigendecomposition of the {}-vertex covering graph (limit {DENSE_EIGEN_LIMIT})",
                self.graph.vertex_count()
            )));
        }
        Ok(())
    }
}
