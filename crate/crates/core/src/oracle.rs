//! Dense reference route for small instances.
//!
//! Every matrix here is assembled straight from the operator definitions
//! (clamped-index blur taps, decimation lattice, shift index formula,
//! patch-sifting windows) — never by probing the matrix-free code — and
//! solved by Gaussian elimination. This is the independent oracle behind
//! the solver's `--oracle-check` path and the test suites.

use crate::degradation::{DegradationModel, Kernel, StackedObservation};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::selfsim::SelfSimGraph;

/// Largest pixel count the dense route accepts (32x32 HR).
pub const MAX_ORACLE_PIXELS: usize = 1024;

/// Minimal row-major dense matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.get(r, k);
                if v == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.add_to(r, c, v * other.get(k, c));
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn add_matrix(&mut self, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Solve A x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, b.len(), "rhs length mismatch");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut pivot = col;
            let mut best = a[col * n + col].abs();
            for row in (col + 1)..n {
                let v = a[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if best < 1e-14 {
                return Err(Error::NumericalBreakdown(format!(
                    "dense solve: singular pivot at column {col}"
                )));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                x.swap(col, pivot);
            }
            let diag = a[col * n + col];
            for row in (col + 1)..n {
                let factor = a[row * n + col] / diag;
                if factor == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                x[row] -= factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for k in (col + 1)..n {
                acc -= a[col * n + k] * x[k];
            }
            x[col] = acc / a[col * n + col];
        }
        Ok(x)
    }

    /// Dense inverse via column-by-column solves.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut out = DenseMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.solve(&e)?;
            for r in 0..n {
                out.set(r, c, col[r]);
            }
        }
        Ok(out)
    }
}

fn check_size(pixels: usize) -> Result<()> {
    if pixels > MAX_ORACLE_PIXELS {
        return Err(Error::OracleTooLarge { pixels, max: MAX_ORACLE_PIXELS });
    }
    Ok(())
}

/// Dense blur matrix from the clamped-correlation definition.
pub fn dense_blur_matrix(h: usize, w: usize, kernel: &Kernel) -> Result<DenseMatrix> {
    check_size(h * w)?;
    let k = kernel.size();
    let half = (k / 2) as i64;
    let mut m = DenseMatrix::zeros(h * w, h * w);
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            for i in 0..k as i64 {
                for j in 0..k as i64 {
                    let rr = (r + i - half).clamp(0, h as i64 - 1) as usize;
                    let cc = (c + j - half).clamp(0, w as i64 - 1) as usize;
                    m.add_to(
                        (r as usize) * w + c as usize,
                        rr * w + cc,
                        kernel.weight(i as usize, j as usize),
                    );
                }
            }
        }
    }
    Ok(m)
}

/// Dense top-left decimation matrix.
pub fn dense_decimation_matrix(h: usize, w: usize, factor: usize) -> Result<DenseMatrix> {
    check_size(h * w)?;
    assert!(h % factor == 0 && w % factor == 0);
    let (m_rows, m_cols) = (h / factor, w / factor);
    let mut m = DenseMatrix::zeros(m_rows * m_cols, h * w);
    for r in 0..m_rows {
        for c in 0..m_cols {
            m.set(r * m_cols + c, factor * r * w + factor * c, 1.0);
        }
    }
    Ok(m)
}

/// Dense shift matrix from the clamped index formula.
pub fn dense_shift_matrix(h: usize, w: usize, rows: i64, cols: i64) -> Result<DenseMatrix> {
    check_size(h * w)?;
    let mut m = DenseMatrix::zeros(h * w, h * w);
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let rr = (r - rows).clamp(0, h as i64 - 1) as usize;
            let cc = (c + cols).clamp(0, w as i64 - 1) as usize;
            m.set((r as usize) * w + c as usize, rr * w + cc, 1.0);
        }
    }
    Ok(m)
}

/// Dense stacked twin operator H = [DB; DBS].
pub fn dense_h(model: &DegradationModel) -> Result<DenseMatrix> {
    let (h, w) = (model.hr_height, model.hr_width);
    check_size(h * w)?;
    let b = dense_blur_matrix(h, w, &model.kernel)?;
    let d = dense_decimation_matrix(h, w, model.factor)?;
    let s = dense_shift_matrix(h, w, model.shift_rows, model.shift_cols)?;
    let db = d.matmul(&b);
    let dbs = db.matmul(&s);
    let mn = h * w;
    let lr = db.rows();
    let mut stacked = DenseMatrix::zeros(2 * lr, mn);
    for r in 0..lr {
        for c in 0..mn {
            stacked.set(r, c, db.get(r, c));
            stacked.set(lr + r, c, dbs.get(r, c));
        }
    }
    Ok(stacked)
}

/// Dense prior operator L = sum alpha_ij (P_i - P_j)^T (P_i - P_j), built
/// from patch-origin arithmetic.
pub fn dense_laplacian(graph: &SelfSimGraph) -> Result<DenseMatrix> {
    let grid = graph.grid();
    let n = grid.image_height() * grid.image_width();
    check_size(n)?;
    let q = grid.patch_size();
    let w = grid.image_width();
    let mut l = DenseMatrix::zeros(n, n);
    for e in graph.edges() {
        let (ti, li) = grid.origin(e.i);
        let (tj, lj) = grid.origin(e.j);
        // Row of (P_i - P_j) for each in-patch offset, combined as an
        // outer-product accumulation.
        for r in 0..q {
            for c in 0..q {
                let pi = (ti + r) * w + (li + c);
                let pj = (tj + r) * w + (lj + c);
                l.add_to(pi, pi, e.alpha);
                l.add_to(pj, pj, e.alpha);
                l.add_to(pi, pj, -e.alpha);
                l.add_to(pj, pi, -e.alpha);
            }
        }
    }
    Ok(l)
}

fn stack_observation(obs: &StackedObservation) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * obs.y1.len());
    y.extend_from_slice(obs.y1.pixels());
    y.extend_from_slice(obs.y2.pixels());
    y
}

/// Dense direct minimizer of the criterion: solve
/// (H^T H + lambda L) z = H^T y.
pub fn dense_tisr_minimizer(
    obs: &StackedObservation,
    model: &DegradationModel,
    graph: &SelfSimGraph,
    lambda: f64,
) -> Result<Image> {
    let h = dense_h(model)?;
    let ht = h.transpose();
    let mut normal = ht.matmul(&h);
    if lambda > 0.0 {
        let mut l = dense_laplacian(graph)?;
        l.scale(lambda);
        normal.add_matrix(&l);
    }
    let rhs = ht.matvec(&stack_observation(obs));
    let z = normal.solve(&rhs)?;
    Image::new(model.hr_height, model.hr_width, z)
}

/// Dense prox: solve (I + weight L) z = v.
pub fn dense_prox(v: &Image, graph: &SelfSimGraph, weight: f64) -> Result<Image> {
    let mut a = dense_laplacian(graph)?;
    a.scale(weight);
    a.add_matrix(&DenseMatrix::identity(v.len()));
    let z = a.solve(v.pixels())?;
    Image::new(v.height(), v.width(), z)
}

/// Dense x-update through the 2mn x 2mn Woodbury route:
/// x = (1/c) (I - (1/c) H^T Phi H) (H^T y + c (z + d)),
/// Phi = (I + (1/c) H H^T)^{-1}.
pub fn woodbury_x_update(
    obs: &StackedObservation,
    model: &DegradationModel,
    z_plus_d: &Image,
    c: f64,
) -> Result<Image> {
    let h = dense_h(model)?;
    let ht = h.transpose();
    let mut gram = h.matmul(&ht);
    gram.scale(1.0 / c);
    gram.add_matrix(&DenseMatrix::identity(gram.rows()));
    let phi = gram.inverse()?;

    let mut rhs = ht.matvec(&stack_observation(obs));
    for (r, zd) in rhs.iter_mut().zip(z_plus_d.pixels()) {
        *r += c * zd;
    }
    let hx = h.matvec(&rhs);
    let phi_hx = phi.matvec(&hx);
    let correction = ht.matvec(&phi_hx);
    let x: Vec<f64> = rhs
        .iter()
        .zip(&correction)
        .map(|(v, corr)| (v - corr / c) / c)
        .collect();
    Image::new(model.hr_height, model.hr_width, x)
}

/// Dense minimum-norm least-squares solution of H z = y for consistent y:
/// z = H^T (H H^T)^{-1} y.
pub fn dense_min_norm_least_squares(
    obs: &StackedObservation,
    model: &DegradationModel,
) -> Result<Image> {
    let h = dense_h(model)?;
    let ht = h.transpose();
    let gram = h.matmul(&ht);
    let w = gram.solve(&stack_observation(obs))?;
    Image::new(model.hr_height, model.hr_width, ht.matvec(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::gaussian_kernel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solve_recovers_known_solution() {
        // [[4, 1], [1, 3]] x = [1, 2] -> x = (1/11, 7/11)
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 4.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 3.0);
        let x = a.solve(&[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 7.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut a = DenseMatrix::zeros(3, 3);
        let values = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        for r in 0..3 {
            for c in 0..3 {
                a.set(r, c, values[r * 3 + c]);
            }
        }
        let inv = a.inverse().unwrap();
        let product = a.matmul(&inv);
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(product.get(r, c), want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(a.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn dense_blur_row_sums_are_one() {
        let kernel = gaussian_kernel(3, 0.65).unwrap();
        let b = dense_blur_matrix(5, 5, &kernel).unwrap();
        for r in 0..25 {
            let sum: f64 = (0..25).map(|c| b.get(r, c)).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn size_guard_triggers() {
        let kernel = gaussian_kernel(3, 0.65).unwrap();
        assert!(matches!(
            dense_blur_matrix(64, 64, &kernel),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
