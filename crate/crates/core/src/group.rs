//! Discrete deck groups: canonical-coordinate arithmetic, balls for
//! truncating sums over `Γ`, and the continuum actions of the built-in
//! families.
//!
//! Supported families all carry an abelian normal subgroup of finite index:
//! finite abelian products and `ℤ^d` are abelian themselves, and the
//! Klein-bottle group `⟨a, b | b a b⁻¹ = a⁻¹⟩` contains `⟨a, b²⟩ ≅ ℤ²` with
//! index 2. Elements of the Klein-bottle group are stored as `a^m b^n`, with
//! product `(m1, n1)·(m2, n2) = (m1 + (−1)^{n1} m2, n1 + n2)`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("invalid group specification: {0}")]
    InvalidSpec(String),
    #[error("element {element} does not belong to {group}")]
    MixedGroup { element: String, group: String },
    #[error("point has dimension {found}, the action of {group} expects {expected}")]
    PointDimension {
        group: String,
        expected: usize,
        found: usize,
    },
    #[error("{0} has no continuum action")]
    NoContinuumAction(String),
}

/// Family of a supported deck group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupFamily {
    FiniteCyclic(u32),
    FiniteProduct(Vec<u32>),
    FreeAbelian(usize),
    KleinBottle,
}

impl fmt::Display for GroupFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupFamily::FiniteCyclic(n) => write!(f, "Z_{n}"),
            GroupFamily::FiniteProduct(ns) => {
                let parts: Vec<String> = ns.iter().map(|n| format!("Z_{n}")).collect();
                write!(f, "{}", parts.join(" x "))
            }
            GroupFamily::FreeAbelian(d) => write!(f, "Z^{d}"),
            GroupFamily::KleinBottle => write!(f, "Klein-bottle group"),
        }
    }
}

/// Which coordinate system an element is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKind {
    Residues,
    Lattice,
    Klein,
}

/// Group element in canonical coordinates: residues in `[0, n)` for finite
/// factors, an integer vector for `ℤ^d`, `(m, n)` for `a^m b^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement {
    kind: ElementKind,
    coords: SmallVec<[i64; 4]>,
}

impl GroupElement {
    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        match self.kind {
            ElementKind::Klein => write!(f, "a^{} b^{}", self.coords[0], self.coords[1]),
            _ => write!(f, "({})", parts.join(",")),
        }
    }
}

/// Abelian normal subgroup of finite index witnessing that the group is of
/// type I.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeOneCertificate {
    pub index: u32,
    pub subgroup: &'static str,
}

/// A finitely described discrete group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    family: GroupFamily,
    description: String,
}

impl GroupSpec {
    pub fn new(family: GroupFamily) -> Result<Self, GroupError> {
        match &family {
            GroupFamily::FiniteCyclic(0) => {
                return Err(GroupError::InvalidSpec("cyclic order must be at least 1".into()))
            }
            GroupFamily::FiniteProduct(ns) if ns.is_empty() => {
                return Err(GroupError::InvalidSpec("product needs at least one factor".into()))
            }
            GroupFamily::FiniteProduct(ns) if ns.contains(&0) => {
                return Err(GroupError::InvalidSpec("cyclic order must be at least 1".into()))
            }
            GroupFamily::FreeAbelian(d) if !(1..=3).contains(d) => {
                return Err(GroupError::InvalidSpec(format!(
                    "free abelian rank must be 1, 2 or 3, got {d}"
                )))
            }
            _ => {}
        }
        let description = family.to_string();
        Ok(GroupSpec {
            family,
            description,
        })
    }

    pub fn cyclic(n: u32) -> Result<Self, GroupError> {
        GroupSpec::new(GroupFamily::FiniteCyclic(n))
    }

    pub fn product(orders: &[u32]) -> Result<Self, GroupError> {
        GroupSpec::new(GroupFamily::FiniteProduct(orders.to_vec()))
    }

    pub fn free_abelian(rank: usize) -> Result<Self, GroupError> {
        GroupSpec::new(GroupFamily::FreeAbelian(rank))
    }

    pub fn klein_bottle() -> Self {
        GroupSpec {
            family: GroupFamily::KleinBottle,
            description: GroupFamily::KleinBottle.to_string(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn family(&self) -> &GroupFamily {
        &self.family
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Orders of the cyclic factors for finite groups.
    pub fn finite_orders(&self) -> Option<&[u32]> {
        match &self.family {
            GroupFamily::FiniteCyclic(n) => Some(std::slice::from_ref(n)),
            GroupFamily::FiniteProduct(ns) => Some(ns),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.finite_orders().is_some()
    }

    pub fn is_abelian(&self) -> bool {
        !matches!(self.family, GroupFamily::KleinBottle)
    }

    pub fn order(&self) -> Option<u64> {
        self.finite_orders()
            .map(|ns| ns.iter().map(|&n| n as u64).product())
    }

    /// Number of canonical coordinates of an element.
    pub fn rank(&self) -> usize {
        match &self.family {
            GroupFamily::FiniteCyclic(_) => 1,
            GroupFamily::FiniteProduct(ns) => ns.len(),
            GroupFamily::FreeAbelian(d) => *d,
            GroupFamily::KleinBottle => 2,
        }
    }

    pub fn type_one_certificate(&self) -> TypeOneCertificate {
        match self.family {
            GroupFamily::KleinBottle => TypeOneCertificate {
                index: 2,
                subgroup: "<a, b^2> = Z^2",
            },
            _ => TypeOneCertificate {
                index: 1,
                subgroup: "the group itself (abelian)",
            },
        }
    }

    fn kind(&self) -> ElementKind {
        match self.family {
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => ElementKind::Residues,
            GroupFamily::FreeAbelian(_) => ElementKind::Lattice,
            GroupFamily::KleinBottle => ElementKind::Klein,
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            kind: self.kind(),
            coords: SmallVec::from_elem(0, self.rank()),
        }
    }

    /// Builds an element from raw coordinates, reducing residues.
    pub fn element(&self, coords: &[i64]) -> Result<GroupElement, GroupError> {
        if coords.len() != self.rank() {
            return Err(GroupError::MixedGroup {
                element: format!("{coords:?}"),
                group: self.description.clone(),
            });
        }
        let mut out = GroupElement {
            kind: self.kind(),
            coords: SmallVec::from_slice(coords),
        };
        if let Some(ns) = self.finite_orders() {
            for (c, &n) in out.coords.iter_mut().zip(ns) {
                *c = c.rem_euclid(n as i64);
            }
        }
        Ok(out)
    }

    /// Generator `a` of the Klein-bottle group.
    pub fn klein_a(&self) -> GroupElement {
        debug_assert_eq!(self.family, GroupFamily::KleinBottle);
        GroupElement {
            kind: ElementKind::Klein,
            coords: SmallVec::from_slice(&[1, 0]),
        }
    }

    /// Generator `b` of the Klein-bottle group.
    pub fn klein_b(&self) -> GroupElement {
        debug_assert_eq!(self.family, GroupFamily::KleinBottle);
        GroupElement {
            kind: ElementKind::Klein,
            coords: SmallVec::from_slice(&[0, 1]),
        }
    }

    pub fn contains(&self, a: &GroupElement) -> bool {
        if a.kind != self.kind() || a.coords.len() != self.rank() {
            return false;
        }
        match self.finite_orders() {
            Some(ns) => a
                .coords
                .iter()
                .zip(ns)
                .all(|(&c, &n)| (0..n as i64).contains(&c)),
            None => true,
        }
    }

    pub fn check(&self, a: &GroupElement) -> Result<(), GroupError> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(GroupError::MixedGroup {
                element: a.to_string(),
                group: self.description.clone(),
            })
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement, GroupError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement, GroupError> {
        self.check(a)?;
        Ok(self.inv_unchecked(a))
    }

    pub(crate) fn mul_unchecked(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let coords: SmallVec<[i64; 4]> = match &self.family {
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
                let ns = self.finite_orders().unwrap_or(&[]);
                a.coords
                    .iter()
                    .zip(&b.coords)
                    .zip(ns)
                    .map(|((x, y), &n)| (x + y).rem_euclid(n as i64))
                    .collect()
            }
            GroupFamily::FreeAbelian(_) => {
                a.coords.iter().zip(&b.coords).map(|(x, y)| x + y).collect()
            }
            GroupFamily::KleinBottle => {
                let (m1, n1) = (a.coords[0], a.coords[1]);
                let (m2, n2) = (b.coords[0], b.coords[1]);
                SmallVec::from_slice(&[m1 + parity_sign(n1) * m2, n1 + n2])
            }
        };
        GroupElement {
            kind: a.kind,
            coords,
        }
    }

    pub(crate) fn inv_unchecked(&self, a: &GroupElement) -> GroupElement {
        let coords: SmallVec<[i64; 4]> = match &self.family {
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
                let ns = self.finite_orders().unwrap_or(&[]);
                a.coords
                    .iter()
                    .zip(ns)
                    .map(|(x, &n)| (-x).rem_euclid(n as i64))
                    .collect()
            }
            GroupFamily::FreeAbelian(_) => a.coords.iter().map(|x| -x).collect(),
            GroupFamily::KleinBottle => {
                let (m, n) = (a.coords[0], a.coords[1]);
                SmallVec::from_slice(&[-parity_sign(n) * m, -n])
            }
        };
        GroupElement {
            kind: a.kind,
            coords,
        }
    }

    /// Max-norm of the word coordinates. Finite residues are measured by
    /// their symmetric representative.
    pub fn norm(&self, a: &GroupElement) -> u64 {
        match self.finite_orders() {
            Some(ns) => a
                .coords
                .iter()
                .zip(ns)
                .map(|(&c, &n)| (c as u64).min(n as u64 - c as u64))
                .max()
                .unwrap_or(0),
            None => a.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0),
        }
    }

    /// Largest norm of any element; `None` for infinite groups.
    pub fn diameter(&self) -> Option<u64> {
        self.finite_orders()
            .map(|ns| ns.iter().map(|&n| n as u64 / 2).max().unwrap_or(0))
    }

    /// All elements of norm at most `radius`, in lexicographic order of
    /// their canonical coordinates.
    pub fn enumerate_ball(&self, radius: u64) -> Vec<GroupElement> {
        let kind = self.kind();
        let ranges: Vec<Vec<i64>> = match self.finite_orders() {
            Some(ns) => ns
                .iter()
                .map(|&n| {
                    (0..n as i64)
                        .filter(|&c| (c as u64).min(n as u64 - c as u64) <= radius)
                        .collect()
                })
                .collect(),
            None => {
                let r = radius as i64;
                vec![(-r..=r).collect(); self.rank()]
            }
        };
        let mut out = Vec::with_capacity(ranges.iter().map(|r| r.len()).product());
        let mut idx = vec![0usize; ranges.len()];
        loop {
            out.push(GroupElement {
                kind,
                coords: idx.iter().zip(&ranges).map(|(&i, r)| r[i]).collect(),
            });
            // odometer, last coordinate fastest
            let mut pos = ranges.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < ranges[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    /// Elements of norm exactly `radius`.
    pub fn enumerate_shell(&self, radius: u64) -> Vec<GroupElement> {
        self.enumerate_ball(radius)
            .into_iter()
            .filter(|s| self.norm(s) == radius)
            .collect()
    }
}

fn parity_sign(n: i64) -> i64 {
    if n.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Action of the deck group on the continuum covering space.
///
/// - `ℤ^d` on `ℝ^d` by translations of `cell_length`,
/// - `ℤ_n` (or a product of at most three factors) on circles of
///   circumference `n·cell_length`,
/// - the Klein-bottle group on `ℝ²` by `a(x, y) = (x + L, y)` and
///   `b(x, y) = (−x, y + L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumAction {
    spec: GroupSpec,
    cell_length: f64,
}

impl ContinuumAction {
    pub fn new(spec: GroupSpec, cell_length: f64) -> Result<Self, GroupError> {
        if !(cell_length.is_finite() && cell_length > 0.0) {
            return Err(GroupError::InvalidSpec(format!(
                "cell length must be positive, got {cell_length}"
            )));
        }
        if let GroupFamily::FiniteProduct(ns) = spec.family() {
            if ns.len() > 3 {
                return Err(GroupError::NoContinuumAction(spec.description.clone()));
            }
        }
        Ok(ContinuumAction { spec, cell_length })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn cell_length(&self) -> f64 {
        self.cell_length
    }

    pub fn point_dim(&self) -> usize {
        self.spec.rank()
    }

    pub fn act(&self, s: &GroupElement, point: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.spec.check(s)?;
        if point.len() != self.point_dim() {
            return Err(GroupError::PointDimension {
                group: self.spec.description.clone(),
                expected: self.point_dim(),
                found: point.len(),
            });
        }
        let l = self.cell_length;
        let out = match self.spec.family() {
            GroupFamily::FreeAbelian(_) => point
                .iter()
                .zip(s.coords())
                .map(|(x, &k)| x + k as f64 * l)
                .collect(),
            GroupFamily::FiniteCyclic(_) | GroupFamily::FiniteProduct(_) => {
                let ns = self.spec.finite_orders().unwrap_or(&[]);
                point
                    .iter()
                    .zip(s.coords())
                    .zip(ns)
                    .map(|((x, &k), &n)| (x + k as f64 * l).rem_euclid(n as f64 * l))
                    .collect()
            }
            GroupFamily::KleinBottle => {
                let (m, n) = (s.coords()[0], s.coords()[1]);
                vec![
                    m as f64 * l + parity_sign(n) as f64 * point[0],
                    point[1] + n as f64 * l,
                ]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(spec: &GroupSpec, c: &[i64]) -> GroupElement {
        spec.element(c).unwrap()
    }

    #[test]
    fn klein_products() {
        let g = GroupSpec::klein_bottle();
        assert_eq!(
            g.multiply(&el(&g, &[1, 0]), &el(&g, &[0, 1])).unwrap(),
            el(&g, &[1, 1])
        );
        assert_eq!(
            g.multiply(&el(&g, &[0, 1]), &el(&g, &[1, 0])).unwrap(),
            el(&g, &[-1, 1])
        );
    }

    #[test]
    fn klein_defining_relation() {
        // b a b^-1 = a^-1
        let g = GroupSpec::klein_bottle();
        let (a, b) = (g.klein_a(), g.klein_b());
        let bab = g
            .multiply(&g.multiply(&b, &a).unwrap(), &g.inverse(&b).unwrap())
            .unwrap();
        assert_eq!(bab, g.inverse(&a).unwrap());
    }

    #[test]
    fn inverses() {
        let g = GroupSpec::klein_bottle();
        assert_eq!(g.inverse(&el(&g, &[1, 1])).unwrap(), el(&g, &[1, -1]));
        let z4 = GroupSpec::cyclic(4).unwrap();
        assert_eq!(z4.inverse(&el(&z4, &[3])).unwrap(), el(&z4, &[1]));
        let z2 = GroupSpec::free_abelian(2).unwrap();
        assert_eq!(z2.inverse(&el(&z2, &[2, -5])).unwrap(), el(&z2, &[-2, 5]));
    }

    #[test]
    fn abelian_products() {
        let z4 = GroupSpec::cyclic(4).unwrap();
        assert_eq!(z4.multiply(&el(&z4, &[3]), &el(&z4, &[2])).unwrap(), el(&z4, &[1]));
        let z2 = GroupSpec::free_abelian(2).unwrap();
        assert_eq!(
            z2.multiply(&el(&z2, &[1, -1]), &el(&z2, &[2, 3])).unwrap(),
            el(&z2, &[3, 2])
        );
    }

    #[test]
    fn mixed_group_is_rejected() {
        let z2 = GroupSpec::free_abelian(2).unwrap();
        let k = GroupSpec::klein_bottle();
        let err = z2.multiply(&k.klein_a(), &z2.identity()).unwrap_err();
        assert!(matches!(err, GroupError::MixedGroup { .. }));
        let z3 = GroupSpec::cyclic(3).unwrap();
        let z5 = GroupSpec::cyclic(5).unwrap();
        assert!(z3.multiply(&el(&z5, &[4]), &z3.identity()).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(GroupSpec::cyclic(0).is_err());
        assert!(GroupSpec::free_abelian(0).is_err());
        assert!(GroupSpec::free_abelian(4).is_err());
        assert!(GroupSpec::product(&[]).is_err());
        assert!(GroupSpec::product(&[2, 0]).is_err());
    }

    #[test]
    fn balls() {
        let z3 = GroupSpec::cyclic(3).unwrap();
        assert_eq!(z3.enumerate_ball(10).len(), 3);
        let z = GroupSpec::free_abelian(1).unwrap();
        let ball: Vec<i64> = z.enumerate_ball(2).iter().map(|s| s.coords()[0]).collect();
        assert_eq!(ball, vec![-2, -1, 0, 1, 2]);
        let k = GroupSpec::klein_bottle();
        assert_eq!(k.enumerate_ball(1).len(), 9);
        assert_eq!(k.enumerate_ball(0), vec![k.identity()]);
        let z6 = GroupSpec::cyclic(6).unwrap();
        assert_eq!(z6.enumerate_ball(1).len(), 3);
        assert_eq!(z6.enumerate_ball(z6.diameter().unwrap()).len(), 6);
        assert_eq!(k.enumerate_shell(2).len(), 25 - 9);
    }

    #[test]
    fn associativity_on_balls() {
        let specs = [
            GroupSpec::klein_bottle(),
            GroupSpec::free_abelian(2).unwrap(),
            GroupSpec::product(&[2, 3]).unwrap(),
        ];
        for g in &specs {
            let ball = g.enumerate_ball(2);
            for a in &ball {
                assert_eq!(g.multiply(a, &g.inverse(a).unwrap()).unwrap(), g.identity());
                for b in &ball {
                    let ab = g.multiply(a, b).unwrap();
                    for c in &ball {
                        let lhs = g.multiply(&ab, c).unwrap();
                        let rhs = g.multiply(a, &g.multiply(b, c).unwrap()).unwrap();
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn continuum_actions() {
        let z = ContinuumAction::new(GroupSpec::free_abelian(1).unwrap(), 1.0).unwrap();
        let three = z.spec().element(&[3]).unwrap();
        assert_eq!(z.act(&three, &[0.25]).unwrap(), vec![3.25]);

        let k = ContinuumAction::new(GroupSpec::klein_bottle(), 1.0).unwrap();
        let b = k.spec().klein_b();
        let p = k.act(&b, &[0.25, 0.5]).unwrap();
        assert_eq!(p, vec![-0.25, 1.5]);
        // reduce by a: (-0.25 + 1, 1.5)
        let a = k.spec().klein_a();
        assert_eq!(k.act(&a, &p).unwrap(), vec![0.75, 1.5]);
    }

    #[test]
    fn continuum_action_axioms() {
        let k = ContinuumAction::new(GroupSpec::klein_bottle(), 1.0).unwrap();
        let g = k.spec().clone();
        let p = [0.3, -0.7];
        assert_eq!(k.act(&g.identity(), &p).unwrap(), p.to_vec());
        for s in g.enumerate_ball(2) {
            for r in g.enumerate_ball(2) {
                let lhs = k.act(&s, &k.act(&r, &p).unwrap()).unwrap();
                let rhs = k.act(&g.multiply(&s, &r).unwrap(), &p).unwrap();
                for (x, y) in lhs.iter().zip(&rhs) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn certificates() {
        assert_eq!(GroupSpec::klein_bottle().type_one_certificate().index, 2);
        assert_eq!(GroupSpec::cyclic(5).unwrap().type_one_certificate().index, 1);
    }
}
