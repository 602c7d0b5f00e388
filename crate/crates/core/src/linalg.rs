//! Small dense complex matrices and a one-sided Jacobi SVD.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged matrix rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, got: rhs.rows });
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        Ok((0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * x[c]).sum())
            .collect())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn sub(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch { expected: self.rows * self.cols, got: rhs.rows * rhs.cols });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Thin SVD `A = U diag(sigma) V^H` with `k = min(rows, cols)` singular
/// triplets sorted by decreasing singular value.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_TOL: f64 = 1e-12;

/// One-sided (Hestenes) Jacobi SVD.
pub fn jacobi_svd(a: &CMatrix) -> Result<ThinSvd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if a.rows() < a.cols() {
        // A^H = U' S V'^H  =>  A = V' S U'^H
        let t = jacobi_svd_tall(&a.adjoint())?;
        return Ok(ThinSvd { u: t.v, sigma: t.sigma, v: t.u });
    }
    jacobi_svd_tall(a)
}

fn jacobi_svd_tall(a: &CMatrix) -> Result<ThinSvd> {
    let (m, n) = (a.rows(), a.cols());
    // Column-major working copies: w = A V is orthogonalised in place.
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|c| (0..n).map(|r| Complex64::new(if r == c { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(Complex64::norm_sqr).sum();
                let beta: f64 = w[q].iter().map(Complex64::norm_sqr).sum();
                let gamma: Complex64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= JACOBI_TOL * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // Remove the phase of gamma from column q, then a real rotation.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }

    let norms: Vec<f64> = w.iter().map(|col| col.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut ucols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let scale = sigma.first().copied().unwrap_or(0.0);
    for (k, &i) in order.iter().enumerate() {
        if sigma[k] > 1e-14 * scale.max(f64::MIN_POSITIVE) {
            ucols.push(w[i].iter().map(|x| x / sigma[k]).collect());
        } else {
            ucols.push(orthonormal_completion(&ucols, m));
        }
    }
    let u = CMatrix::from_fn(m, n, |r, c| ucols[c][r]);
    let vm = CMatrix::from_fn(n, n, |r, c| v[order[c]][r]);
    Ok(ThinSvd { u, sigma, v: vm })
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    for r in 0..cols[p].len() {
        let xp = cols[p][r];
        let xq = cols[q][r] * phase;
        cols[p][r] = xp * c - xq * s;
        cols[q][r] = xp * s + xq * c;
    }
}

/// Unit vector orthogonal to `basis` (Gram–Schmidt against the standard basis).
fn orthonormal_completion(basis: &[Vec<Complex64>], m: usize) -> Vec<Complex64> {
    let mut best = vec![Complex64::new(0.0, 0.0); m];
    let mut best_norm = -1.0;
    for e in 0..m {
        let mut x: Vec<Complex64> = (0..m).map(|r| Complex64::new(if r == e { 1.0 } else { 0.0 }, 0.0)).collect();
        for b in basis {
            let proj: Complex64 = b.iter().zip(&x).map(|(bi, xi)| bi.conj() * xi).sum();
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= proj * bi;
            }
        }
        let nrm = x.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        if nrm > best_norm {
            best_norm = nrm;
            best = x.iter().map(|v| v / nrm).collect();
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(m: usize, n: usize, seed: u64) -> CMatrix {
        let mut r = rng::stream(seed, &[]);
        CMatrix::from_fn(m, n, |_, _| rng::complex_gaussian(&mut r, 1.0))
    }

    fn check(a: &CMatrix) {
        let svd = jacobi_svd(a).unwrap();
        let k = a.rows().min(a.cols());
        assert_eq!(svd.sigma.len(), k);
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        let recon = svd.u.matmul(&CMatrix::diag_real(&svd.sigma)).unwrap().matmul(&svd.v.adjoint()).unwrap();
        let err = recon.sub(a).unwrap().frobenius_sq().sqrt() / a.frobenius_sq().sqrt();
        assert!(err < 1e-12, "reconstruction error {err}");
        for g in [svd.u.adjoint().matmul(&svd.u).unwrap(), svd.v.adjoint().matmul(&svd.v).unwrap()] {
            let d = g.sub(&CMatrix::identity(k)).unwrap().frobenius_sq().sqrt();
            assert!(d < 1e-10, "orthonormality defect {d}");
        }
    }

    #[test]
    fn svd_of_random_shapes() {
        for (i, &(m, n)) in [(1, 1), (2, 2), (4, 4), (6, 6), (3, 5), (5, 3), (8, 2)].iter().enumerate() {
            check(&random(m, n, i as u64));
        }
    }

    #[test]
    fn svd_of_rank_deficient_matrix() {
        let col = random(4, 1, 3);
        let a = CMatrix::from_fn(4, 3, |r, c| col[(r, 0)] * (c as f64 + 1.0));
        let svd = jacobi_svd(&a).unwrap();
        assert!(svd.sigma[1] < 1e-12 && svd.sigma[2] < 1e-12);
        check(&a);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = CMatrix::identity(2);
        a[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(jacobi_svd(&a).is_err());
    }
}
