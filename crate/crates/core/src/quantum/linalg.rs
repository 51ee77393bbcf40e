//! Fixed-size 4×4 complex linear algebra.
//!
//! Everything here is stack allocated. The eigensolver is a cyclic Jacobi
//! iteration, which for a 4×4 Hermitian matrix converges in a handful of
//! sweeps and yields an eigenvector basis that is unitary to roundoff.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut, Mul};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense 4×4 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4(pub [[C64; 4]; 4]);

impl Mat4 {
    pub const fn zeros() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: [C64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = diag[i];
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= factor);
        m
    }

    pub fn add(&self, other: &Mat4) -> Self {
        let mut m = *self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += other.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Mat4) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Largest elementwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (o, row) in out.iter_mut().zip(self.0.iter()) {
            *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
        out
    }

    /// `M† v` without materializing the adjoint.
    pub fn apply_adjoint(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.0[0][j].conj() * v[0]
                + self.0[1][j].conj() * v[1]
                + self.0[2][j].conj() * v[2]
                + self.0[3][j].conj() * v[3];
        }
        out
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().flatten().all(|x| x.im == 0.0)
    }
}

impl Index<(usize, usize)> for Mat4 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl Mul for &Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: &Mat4) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                for j in 0..4 {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        &self * &rhs
    }
}

/// Inner product `⟨a|b⟩`.
pub fn inner(a: &[C64; 4], b: &[C64; 4]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2] + a[3].conj() * b[3]
}

/// Eigen-decomposition of a Hermitian matrix: `h = V diag(λ) V†`.
///
/// Eigenvalues are sorted ascending; column `k` of `vectors` belongs to
/// `values[k]`. Only the upper triangle of `h` is trusted.
#[derive(Debug, Clone, Copy)]
pub struct HermitianEigen {
    pub values: [f64; 4],
    pub vectors: Mat4,
}

pub fn hermitian_eigen(h: &Mat4) -> HermitianEigen {
    if h.is_real() {
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = if j >= i { h.0[i][j].re } else { h.0[j][i].re };
            }
        }
        let (values, vecs) = real_symmetric_eigen(a);
        let mut vectors = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                vectors.0[i][j] = C64::new(vecs[i][j], 0.0);
            }
        }
        return HermitianEigen { values, vectors };
    }
    complex_hermitian_eigen(h)
}

fn jacobi_tangent(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, t * c)
}

fn real_symmetric_eigen(mut a: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag.max(f64::MIN_POSITIVE) * 1e-4 || off == 0.0 {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let (c, s) = jacobi_tangent(a[p][p], a[q][q], apq);
                // A <- R^T A R with R = [[c, s], [-s, c]] in the (p, q) plane.
                for row in a.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
                for k in 0..4 {
                    let (xp, xq) = (a[p][k], a[q][k]);
                    a[p][k] = c * xp - s * xq;
                    a[q][k] = s * xp + c * xq;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let mut values = [0.0; 4];
    let mut vectors = [[0.0; 4]; 4];
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[src][src];
        for i in 0..4 {
            vectors[i][k] = v[i][src];
        }
    }
    (values, vectors)
}

fn complex_hermitian_eigen(h: &Mat4) -> HermitianEigen {
    let mut a = *h;
    for i in 0..4 {
        a.0[i][i] = C64::new(a.0[i][i].re, 0.0);
        for j in 0..i {
            a.0[i][j] = a.0[j][i].conj();
        }
    }
    let mut v = Mat4::identity();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| a.0[i][j].norm_sqr())
            .sum();
        let diag: f64 = (0..4).map(|i| a.0[i][i].re * a.0[i][i].re).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag.max(f64::MIN_POSITIVE) * 1e-4 || off == 0.0 {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                let b = a.0[p][q];
                let r = b.norm();
                if r == 0.0 {
                    continue;
                }
                let phase = b / r;
                let (c, s) = jacobi_tangent(a.0[p][p].re, a.0[q][q].re, r);
                // G = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q).
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                for row in a.0.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = xp * gpp + xq * gqp;
                    row[q] = xp * gpq + xq * gqq;
                }
                for k in 0..4 {
                    let (xp, xq) = (a.0[p][k], a.0[q][k]);
                    a.0[p][k] = gpp.conj() * xp + gqp.conj() * xq;
                    a.0[q][k] = gpq.conj() * xp + gqq.conj() * xq;
                }
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                a.0[p][p].im = 0.0;
                a.0[q][q].im = 0.0;
                for row in v.0.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = xp * gpp + xq * gqp;
                    row[q] = xp * gpq + xq * gqq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| a.0[x][x].re.total_cmp(&a.0[y][y].re));
    let mut values = [0.0; 4];
    let mut vectors = Mat4::zeros();
    for (k, &src) in order.iter().enumerate() {
        values[k] = a.0[src][src].re;
        for i in 0..4 {
            vectors.0[i][k] = v.0[i][src];
        }
    }
    HermitianEigen { values, vectors }
}

/// `exp(-i dt H)` for Hermitian `H`, via its eigen-decomposition.
pub fn expm_hermitian(h: &Mat4, dt: f64) -> Mat4 {
    let eig = hermitian_eigen(h);
    let phases = eig.values.map(|e| C64::from_polar(1.0, -dt * e));
    let w = &eig.vectors;
    let mut out = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += w.0[i][k] * phases[k] * w.0[j][k].conj();
            }
            out.0[i][j] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(seed: u64) -> Mat4 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat4::zeros();
        for i in 0..4 {
            m.0[i][i] = C64::new(rng.random_range(-2.0..2.0), 0.0);
            for j in i + 1..4 {
                let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m.0[i][j] = z;
                m.0[j][i] = z.conj();
            }
        }
        m
    }

    #[test]
    fn eigen_reconstructs_complex_matrix() {
        for seed in 0..50 {
            let h = random_hermitian(seed);
            let eig = hermitian_eigen(&h);
            let rebuilt = &(&eig.vectors
                * &Mat4::from_diagonal(eig.values.map(|x| C64::new(x, 0.0))))
                * &eig.vectors.adjoint();
            assert!(rebuilt.sub(&h).max_abs() < 1e-12, "seed {seed}");
            let gram = &eig.vectors.adjoint() * &eig.vectors;
            assert!(gram.sub(&Mat4::identity()).max_abs() < 1e-13);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_handles_degenerate_spectrum() {
        let h = Mat4::from_diagonal([C64::new(1.0, 0.0); 4]);
        let eig = hermitian_eigen(&h);
        assert_eq!(eig.values, [1.0; 4]);
        assert_eq!(eig.vectors, Mat4::identity());
    }

    #[test]
    fn real_path_matches_complex_path() {
        let mut h = random_hermitian(7);
        for i in 0..4 {
            for j in 0..4 {
                h.0[i][j].im = 0.0;
            }
        }
        let real = hermitian_eigen(&h);
        let complex = complex_hermitian_eigen(&h);
        for k in 0..4 {
            assert!((real.values[k] - complex.values[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn adjoint_application_matches_explicit_adjoint() {
        let h = random_hermitian(3);
        let u = expm_hermitian(&h, 0.3);
        let v = [C64::new(0.1, 0.2), C64::new(-0.3, 0.0), C64::new(0.0, 0.5), ONE];
        let a = u.apply_adjoint(&v);
        let b = u.adjoint().apply(&v);
        for k in 0..4 {
            assert!((a[k] - b[k]).norm() < 1e-15);
        }
    }
}
