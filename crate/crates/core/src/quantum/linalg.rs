//! Small dense complex matrices and a cyclic Jacobi eigensolver for Hermitian ones.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return invalid("matrix rows must form a square");
        }
        Ok(CMatrix { n, data: rows.concat() })
    }

    pub fn from_real(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return invalid(format!("expected {} entries, got {}", n * n, values.len()));
        }
        Ok(CMatrix { n, data: values.iter().map(|&v| C64::new(v, 0.0)).collect() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// |v⟩⟨v|.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn mul(&self, o: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut r = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    r.data[i * n + j] += a * o.data[k * n + j];
                }
            }
        }
        r
    }

    pub fn add(&self, o: &CMatrix) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &CMatrix) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, k: C64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * k).collect(),
        }
    }

    pub fn adjoint(&self) -> CMatrix {
        let n = self.n;
        let mut r = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = self[(j, i)].conj();
            }
        }
        r
    }

    pub fn kron(&self, o: &CMatrix) -> CMatrix {
        let (n, m) = (self.n, o.n);
        let mut r = CMatrix::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        r[(i * m + k, j * m + l)] = a * o[(k, l)];
                    }
                }
            }
        }
        r
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum())
            .collect()
    }

    /// max |M − M†|.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, o: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn off_diagonal_norm(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += self[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigenvalues in ascending order; column k of `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.n).map(|i| self.vectors[(i, k)]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi. Each rotation first removes the phase of the pivot entry
/// with a diagonal unitary, then applies an ordinary real Givens rotation.
pub fn hermitian_eigen(m: &CMatrix) -> Result<Eigen> {
    let n = m.n;
    let scale = m.frobenius();
    if m.hermiticity_residual() > 1e-10 * scale.max(1.0) {
        return invalid("matrix is not Hermitian");
    }
    let mut a = m.clone();
    let mut v = CMatrix::identity(n);
    let threshold = 1e-15 * scale.max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    while a.off_diagonal_norm() > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Solver(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let z = a[(p, q)];
                let mag = z.norm();
                if mag <= threshold * 1e-3 {
                    continue;
                }
                let phase = z / mag; // e^{iφ}
                let (app, aqq) = (a[(p, p)].re, a[(q, q)].re);
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, e^{-iφ}) · [[c, s], [−s, c]] on the (p,q) plane.
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;
                // A ← A G
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // A ← G† A
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (k, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, k)] = v[(r, i)];
        }
    }
    Ok(Eigen { values, vectors })
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> CMatrix {
    CMatrix { n: 2, data: vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO] }
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_decomposition(m: &CMatrix) {
        let e = hermitian_eigen(m).unwrap();
        let n = m.dim();
        for k in 0..n {
            let v = e.vector(k);
            let mv = m.apply(&v);
            for i in 0..n {
                assert!((mv[i] - v[i] * e.values[k]).norm() < 1e-12, "residual at {k}");
            }
        }
        let vv = e.vectors.adjoint().mul(&e.vectors);
        assert!(vv.max_abs_diff(&CMatrix::identity(n)) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pauli_spectra() {
        for p in [pauli_x(), pauli_y(), pauli_z()] {
            let e = hermitian_eigen(&p).unwrap();
            assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
            check_decomposition(&p);
        }
    }

    #[test]
    fn complex_four_by_four() {
        let x = pauli_x();
        let y = pauli_y();
        let m = x.kron(&y).add(&y.kron(&pauli_z()).scale(C64::new(0.3, 0.0))).add(&CMatrix::identity(4));
        check_decomposition(&m);
    }

    #[test]
    fn degenerate_and_zero() {
        check_decomposition(&CMatrix::zeros(3));
        check_decomposition(&CMatrix::identity(4).scale(C64::new(2.0, 0.0)));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(hermitian_eigen(&m).is_err());
    }
}
