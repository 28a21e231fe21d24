//! Dense complex matrices and conjugate-gradient solvers.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n);
        for i in 0..n {
            a.data[i * n + i] = C64::new(1.0, 0.0);
        }
        a
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    // <a, b> = sum conj(a_i) b_i
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Set when a search direction had non-positive curvature.
    pub breakdown: bool,
}

/// Jacobi-preconditioned conjugate gradient for a Hermitian positive
/// (semi)definite system. Returns the best iterate seen.
pub fn pcg_solve(a: &CMatrix, b: &[C64], tol: f64, max_iter: usize) -> PcgOutcome {
    pcg_solve_from(a, b, None, tol, max_iter)
}

/// [`pcg_solve`] started from `x0` instead of zero.
pub fn pcg_solve_from(
    a: &CMatrix,
    b: &[C64],
    x0: Option<&[C64]>,
    tol: f64,
    max_iter: usize,
) -> PcgOutcome {
    let n = a.dim();
    let b_norm = cnorm(b);
    let zero = C64::new(0.0, 0.0);
    if b_norm == 0.0 {
        return PcgOutcome {
            x: vec![zero; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            breakdown: false,
        };
    }
    let diag_max = (0..n).map(|i| a.get(i, i).re.abs()).fold(0.0, f64::max);
    let floor = (diag_max * 1e-12).max(f64::MIN_POSITIVE);
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / a.get(i, i).re.max(floor)).collect();

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![zero; n],
    };
    let mut r: Vec<C64> = match x0 {
        Some(_) => b.iter().zip(a.matvec(&x)).map(|(b, ax)| b - ax).collect(),
        None => b.to_vec(),
    };
    let mut best_x = x.clone();
    let mut best_res = cnorm(&r) / b_norm;
    if best_res < tol {
        return PcgOutcome {
            x,
            iterations: 0,
            relative_residual: best_res,
            converged: true,
            breakdown: false,
        };
    }
    let mut z: Vec<C64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = cdot(&r, &z).re;
    let mut iterations = 0;
    let mut breakdown = false;

    for it in 1..=max_iter {
        iterations = it;
        let ap = a.matvec(&p);
        let curvature = cdot(&p, &ap).re;
        if !(curvature > 0.0) {
            breakdown = true;
            break;
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let res = cnorm(&r) / b_norm;
        if res < best_res {
            best_res = res;
            best_x.clone_from(&x);
        }
        if res < tol {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = cdot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + p[i] * beta;
        }
    }
    PcgOutcome {
        x: best_x,
        iterations,
        relative_residual: best_res,
        converged: best_res < tol,
        breakdown,
    }
}

/// Plain conjugate gradient for a symmetric positive definite operator.
pub fn cg_real(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let curvature: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(curvature > 0.0) {
            break;
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() < tol * b_norm {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}
