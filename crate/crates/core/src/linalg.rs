//! Small linear-algebra helpers: a real CSR matrix for graph operators,
//! Hermitian spectral synthesis and a Chebyshev expansion of `exp(−τH)`
//! acting on column blocks.

use crate::{CMatrix, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Row-compressed real sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are
    /// summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| x[j] * v).sum())
            .collect()
    }

    pub fn apply_real(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| x[j] * v).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if i == j {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            lo = lo.min(diag - off);
            hi = hi.max(diag + off);
        }
        if self.n == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Eigen-decomposition `A = V diag(λ) V*` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenFailure {
    pub dim: usize,
    pub norm: f64,
    pub asymmetry: f64,
}

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 100_000;

impl HermitianEigen {
    pub fn of_complex(a: &CMatrix) -> Result<Self, EigenFailure> {
        let n = a.nrows();
        match nalgebra::SymmetricEigen::try_new(a.clone(), EIG_EPS, EIG_MAX_ITER) {
            Some(e) => Ok(HermitianEigen {
                values: e.eigenvalues.iter().copied().collect(),
                vectors: e.eigenvectors,
            }),
            None => Err(EigenFailure {
                dim: n,
                norm: a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
                asymmetry: max_abs(&(a - a.adjoint())),
            }),
        }
    }

    pub fn of_real(a: &DMatrix<f64>) -> Result<Self, EigenFailure> {
        let n = a.nrows();
        match nalgebra::SymmetricEigen::try_new(a.clone(), EIG_EPS, EIG_MAX_ITER) {
            Some(e) => Ok(HermitianEigen {
                values: e.eigenvalues.iter().copied().collect(),
                vectors: e.eigenvectors.map(|x| C64::new(x, 0.0)),
            }),
            None => Err(EigenFailure {
                dim: n,
                norm: a.norm(),
                asymmetry: (a - a.transpose()).amax(),
            }),
        }
    }

    /// `V diag(f(λ)) V*`.
    pub fn synthesize(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr[A* B]` without forming the product.
pub fn trace_adjoint_product(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `acc += scale · m` in place.
pub fn axpy(acc: &mut CMatrix, scale: C64, m: &CMatrix) {
    for (a, b) in acc.iter_mut().zip(m.iter()) {
        *a += scale * b;
    }
}

/// Scaled modified Bessel values `e^{−z} I_k(z)` for `k = 0..`, truncated
/// once they drop below `cutoff`.
///
/// Miller's backward recurrence `I_{k−1} = (2k/z) I_k + I_{k+1}`,
/// normalized with `I_0 + 2 Σ_{k≥1} I_k = e^z`.
pub fn scaled_bessel_i(z: f64, cutoff: f64) -> Vec<f64> {
    assert!(z >= 0.0 && z.is_finite());
    if z == 0.0 {
        return vec![1.0];
    }
    let start = (z + 30.0 + 15.0 * z.sqrt()).ceil() as usize + 20;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = (2.0 * k as f64 / z) * vals[k] + vals[k + 1];
        if vals[k - 1] > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
    let mut out: Vec<f64> = vals.iter().map(|v| v / norm).collect();
    let keep = out
        .iter()
        .rposition(|&v| v > cutoff)
        .map(|p| p + 1)
        .unwrap_or(1);
    out.truncate(keep);
    out
}

/// Columns of `exp(−τH)` for a real symmetric sparse `H`, applied to the
/// given real start vectors (one per column).
pub fn chebyshev_heat_columns(h: &CsrMatrix, tau: f64, starts: &DMatrix<f64>) -> DMatrix<f64> {
    let (lo, hi) = h.gershgorin();
    let center = 0.5 * (hi + lo);
    let radius = 0.5 * (hi - lo);
    let prefactor = (-tau * lo).exp();
    let n = h.dim();
    let cols: Vec<Vec<f64>> = (0..starts.ncols())
        .into_par_iter()
        .map(|c| {
            let x0: Vec<f64> = starts.column(c).iter().copied().collect();
            if radius <= 0.0 {
                return x0.iter().map(|v| v * (-tau * center).exp()).collect();
            }
            // e^{−τH} = e^{−τ lo} Σ_k c_k T_k(X), X = (H − center)/radius,
            // c_0 = e^{−z}I_0(z), c_k = 2(−1)^k e^{−z}I_k(z), z = τ·radius
            let coeffs = scaled_bessel_i(tau * radius, 1e-18);
            let apply_x = |v: &[f64]| -> Vec<f64> {
                let hv = h.apply_real(v);
                hv.iter()
                    .zip(v)
                    .map(|(a, b)| (a - center * b) / radius)
                    .collect()
            };
            let mut acc: Vec<f64> = x0.iter().map(|v| coeffs[0] * v).collect();
            if coeffs.len() > 1 {
                let mut prev = x0.clone();
                let mut cur = apply_x(&x0);
                for (k, &ck) in coeffs.iter().enumerate().skip(1) {
                    let sign = if k % 2 == 0 { 2.0 } else { -2.0 };
                    for (a, v) in acc.iter_mut().zip(&cur) {
                        *a += sign * ck * v;
                    }
                    if k + 1 < coeffs.len() {
                        let xc = apply_x(&cur);
                        let next: Vec<f64> =
                            xc.iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
                        prev = std::mem::replace(&mut cur, next);
                    }
                }
            }
            acc.iter().map(|v| v * prefactor).collect()
        })
        .collect();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_normalization_and_small_z() {
        let v = scaled_bessel_i(1.0, 1e-30);
        // e^{-1} I_0(1) = 0.4657596075936404, e^{-1} I_1(1) = 0.2079104153497085
        assert!((v[0] - 0.465_759_607_593_640_4).abs() < 1e-14);
        assert!((v[1] - 0.207_910_415_349_708_5).abs() < 1e-14);
        let total: f64 = v[0] + 2.0 * v[1..].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bessel_large_argument() {
        // e^{-z} I_0(z) ~ 1/sqrt(2 pi z) (1 + 1/(8z) + 9/(128 z^2))
        let z: f64 = 400.0;
        let v = scaled_bessel_i(z, 1e-18);
        let asym = (1.0 + 1.0 / (8.0 * z) + 9.0 / (128.0 * z * z)) / (2.0 * std::f64::consts::PI * z).sqrt();
        assert!((v[0] - asym).abs() / asym < 1e-7);
    }

    #[test]
    fn chebyshev_matches_dense_exponential() {
        // path graph Laplacian with a potential
        let n = 12;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0 + 0.3 * i as f64)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        let h = CsrMatrix::from_rows(rows);
        let dense = h.to_dense();
        let eig = HermitianEigen::of_real(&dense).unwrap();
        let tau = 0.7;
        let exact = eig.synthesize(|l| C64::new((-tau * l).exp(), 0.0));
        let starts = DMatrix::<f64>::identity(n, n);
        let cheb = chebyshev_heat_columns(&h, tau, &starts);
        for i in 0..n {
            for j in 0..n {
                assert!((cheb[(i, j)] - exact[(i, j)].re).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn synthesis_reproduces_matrix() {
        let a = CMatrix::from_fn(3, 3, |i, j| {
            let re = (i + j) as f64;
            let im = i as f64 - j as f64;
            C64::new(re, im)
        });
        let eig = HermitianEigen::of_complex(&a).unwrap();
        let back = eig.synthesize(|l| C64::new(l, 0.0));
        assert!(max_abs(&(back - &a)) < 1e-13);
    }

    #[test]
    fn csr_sums_duplicates() {
        let m = CsrMatrix::from_rows(vec![vec![(0, 1.0), (0, 2.0)], vec![(1, -1.0)]]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.gershgorin(), (-1.0, 3.0));
    }
}
