//! Small dense helpers and Krylov solvers for symmetric operators.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// A symmetric linear operator given by its action.
pub trait SymOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Deterministic positive start vector with entries in [0.5, 1.5).
pub fn start_vector(n: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// Number of eigenvalues of the symmetric tridiagonal (alpha, beta) below x.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        q = alpha[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The j-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix.
pub fn tridiag_eigenvalue(alpha: &[f64], beta: &[f64], j: usize) -> f64 {
    let n = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeEigen {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
}

/// Extreme eigenvalues by Lanczos without reorthogonalisation (ghost copies
/// do not move the extremes). Stops when both extremes move by less than
/// `tol` relative over five iterations.
pub fn lanczos_extremes<A: SymOp + ?Sized>(op: &A, tol: f64, max_iter: usize) -> Result<ExtremeEigen> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::InsufficientData("empty operator".into()));
    }
    let mut v = start_vector(n);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut v_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history: Vec<(f64, f64)> = Vec::new();
    for it in 0..max_iter.min(n.max(1) + 5) {
        op.apply(&v, &mut w);
        let a = dot(&w, &v);
        let b_prev = beta.last().copied().unwrap_or(0.0);
        for i in 0..n {
            w[i] -= a * v[i] + b_prev * v_prev[i];
        }
        alpha.push(a);
        let b = norm(&w);
        let lo = tridiag_eigenvalue(&alpha, &beta, 0);
        let hi = tridiag_eigenvalue(&alpha, &beta, alpha.len() - 1);
        history.push((lo, hi));
        let k = history.len();
        let scale = hi.abs().max(lo.abs()).max(1e-300);
        let settled = k > 6 && {
            let (l5, h5) = history[k - 6];
            (lo - l5).abs() <= tol * scale && (hi - h5).abs() <= tol * scale
        };
        if settled || b <= 1e-14 * scale || alpha.len() >= n {
            return Ok(ExtremeEigen { min: lo, max: hi, iterations: it + 1 });
        }
        beta.push(b);
        for i in 0..n {
            v_prev[i] = v[i];
            v[i] = w[i] / b;
        }
    }
    Err(Error::NoConvergence { what: "Lanczos extreme eigenvalues", iterations: max_iter })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from `x` (used as the initial guess). A non-positive curvature direction
/// is reported as `Supercritical` with the supplied `r`.
pub fn conjugate_gradient<A: SymOp + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    r: f64,
) -> Result<SolveInfo> {
    let n = op.dim();
    let bnorm = norm(b).max(1e-300);
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut res: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = res.clone();
    let mut rr = dot(&res, &res);
    let mut ap = ax;
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(SolveInfo { iterations: it, relative_residual: rr.sqrt() / bnorm });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Supercritical { r });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
        }
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = res[i] + beta * p[i];
        }
        rr = rr_new;
    }
    // recompute the true residual before giving up
    op.apply(x, &mut ap);
    let true_res = norm(&b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
    if true_res <= tol {
        return Ok(SolveInfo { iterations: max_iter, relative_residual: true_res });
    }
    Err(Error::NoConvergence { what: "conjugate gradient", iterations: max_iter })
}

/// Least-squares line y = slope·x + intercept; returns (slope, intercept,
/// residual 2-norm).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let res = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum::<f64>().sqrt();
    (slope, intercept, res)
}

/// Solves a small dense linear system by Gaussian elimination with partial
/// pivoting. Returns None for singular systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            if f != 0.0 {
                for j in c..n {
                    a[i][j] -= f * a[c][j];
                }
                b[i] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|j| a[c][j] * x[j]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

/// Ordinary least squares for a small design matrix (rows = observations).
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = design.first()?.len();
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..p {
            aty[i] += row[i] * yi;
            for j in 0..p {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve_dense(ata, aty)?;
    let res = design
        .iter()
        .zip(y)
        .map(|(row, &yi)| (yi - row.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()).powi(2))
        .sum::<f64>()
        .sqrt();
    Some((coef, res))
}

/// Golden-section minimisation of a unimodal function on [a, b].
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Dense symmetric matrix operator, used in tests and small problems.
pub struct DenseSym {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymOp for DenseSym {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            y[i] = (0..self.n).map(|j| self.data[i * self.n + j] * x[j]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> DenseSym {
        // adjacency of a path: eigenvalues 2cos(k pi/(n+1))
        let mut data = vec![0.0; n * n];
        for i in 0..n - 1 {
            data[i * n + i + 1] = 1.0;
            data[(i + 1) * n + i] = 1.0;
        }
        DenseSym { n, data }
    }

    #[test]
    fn lanczos_on_path() {
        let n = 40;
        let op = path_laplacian(n);
        let e = lanczos_extremes(&op, 1e-13, 500).unwrap();
        let exact = 2.0 * (core::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((e.max - exact).abs() < 1e-9, "{} vs {}", e.max, exact);
        assert!((e.min + exact).abs() < 1e-9);
    }

    #[test]
    fn cg_solves_shifted_path() {
        let n = 30;
        let mut op = path_laplacian(n);
        for i in 0..n {
            for j in 0..n {
                op.data[i * n + j] = if i == j { 1.0 } else { 0.0 } - 0.4 * op.data[i * n + j];
            }
        }
        let b: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let mut x = vec![0.0; n];
        let info = conjugate_gradient(&op, &b, &mut x, 1e-13, 200, 0.4).unwrap();
        assert!(info.relative_residual < 1e-13);
        let mut ax = vec![0.0; n];
        op.apply(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_detects_indefinite() {
        let op = DenseSym { n: 2, data: vec![1.0, 0.0, 0.0, -1.0] };
        let mut x = vec![0.0; 2];
        let err = conjugate_gradient(&op, &[1.0, 1.0], &mut x, 1e-12, 10, 2.0).unwrap_err();
        assert_eq!(err, Error::Supercritical { r: 2.0 });
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i, r) = linear_fit(&x, &y);
        assert!((s - 2.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12 && r < 1e-12);
        let m = golden_min(|t| (t - 0.3) * (t - 0.3), 0.0, 1.0, 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
        let design: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v, v * v]).collect();
        let y2: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v - 0.25 * v * v).collect();
        let (c, _) = least_squares(&design, &y2).unwrap();
        assert!((c[2] + 0.25).abs() < 1e-10);
    }
}
