//! Small dense helpers for per-site matrices, plus the iterative solvers
//! the flows are built on.

use nalgebra::{DMatrix, DVector};

use crate::geometry::C64;

pub fn mat_mul(r: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    for i in 0..r {
        for j in 0..r {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..r {
                s += a[i * r + k] * b[k * r + j];
            }
            out[i * r + j] = s;
        }
    }
}

pub fn mat_mul_vec(r: usize, a: &[C64], v: &[C64], out: &mut [C64]) {
    for i in 0..r {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..r {
            s += a[i * r + k] * v[k];
        }
        out[i] = s;
    }
}

pub fn mat_adjoint(r: usize, a: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); r * r];
    for i in 0..r {
        for j in 0..r {
            out[j * r + i] = a[i * r + j].conj();
        }
    }
    out
}

pub fn trace(r: usize, a: &[C64]) -> C64 {
    (0..r).map(|i| a[i * r + i]).sum()
}

pub fn to_dmatrix(r: usize, a: &[C64]) -> DMatrix<C64> {
    DMatrix::from_row_slice(r, r, a)
}

pub fn from_dmatrix(m: &DMatrix<C64>) -> Vec<C64> {
    let r = m.nrows();
    let mut out = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and
/// column eigenvectors.
pub fn herm_eigen(r: usize, a: &[C64]) -> (Vec<f64>, DMatrix<C64>) {
    let mut m = to_dmatrix(r, a);
    let adj = m.adjoint();
    m = (m + adj) * C64::new(0.5, 0.0);
    let eig = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..r).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<C64>::zeros(r, r);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// `f(A)` for Hermitian `A` through its spectrum.
pub fn herm_fn(r: usize, a: &[C64], f: impl Fn(f64) -> f64) -> Vec<C64> {
    if r == 1 {
        return vec![C64::new(f(a[0].re), 0.0)];
    }
    let (vals, vecs) = herm_eigen(r, a);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(r, vals.iter().map(|&v| C64::new(f(v), 0.0))));
    from_dmatrix(&(&vecs * d * vecs.adjoint()))
}

/// `f(A)` for Hermitian `A` with a complex-valued spectral function.
pub fn herm_fn_c(r: usize, a: &[C64], f: impl Fn(f64) -> C64) -> Vec<C64> {
    if r == 1 {
        return vec![f(a[0].re)];
    }
    let (vals, vecs) = herm_eigen(r, a);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(r, vals.iter().map(|&v| f(v))));
    from_dmatrix(&(&vecs * d * vecs.adjoint()))
}

pub fn mat_inverse(r: usize, a: &[C64]) -> Option<Vec<C64>> {
    if r == 1 {
        return if a[0].norm() > 0.0 { Some(vec![a[0].inv()]) } else { None };
    }
    to_dmatrix(r, a).try_inverse().map(|m| from_dmatrix(&m))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive operator.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, CgInfo) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, CgInfo { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, CgInfo { iterations: it, relative_residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel < tol {
            return (x, CgInfo { iterations: it + 1, relative_residual: rel });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, CgInfo { iterations: max_iter, relative_residual: rel })
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Conjugate gradients for a Hermitian positive operator on complex vectors.
pub fn cg_complex(apply: impl Fn(&[C64]) -> Vec<C64>, b: &[C64], x0: &[C64], tol: f64, max_iter: usize) -> Vec<C64> {
    let n = b.len();
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let bnorm = cdot(b, b).re.sqrt().max(1e-300);
    let mut p = r.clone();
    let mut rr = cdot(&r, &r).re;
    for _ in 0..max_iter {
        if rr.sqrt() / bnorm < tol {
            break;
        }
        let ap = apply(&p);
        let pap = cdot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = cdot(&r, &r).re;
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
    }
    x
}

/// Line search and memory settings for [`lbfgs`].
#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 12, max_iters: 5000, initial_step: 0.1, backtrack: 0.5, armijo: 1e-4, min_step: 1e-14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsExit {
    Stopped,
    MaxIters,
    LineSearchFailed,
}

/// Limited-memory BFGS with Armijo backtracking. `monitor` sees every
/// accepted iterate as `(iteration, x, energy, step)`.
pub fn lbfgs(
    x: &mut Vec<f64>,
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    opts: &LbfgsOptions,
    mut monitor: impl FnMut(usize, &[f64], f64, f64) -> Control,
) -> (LbfgsExit, usize) {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut e = f(x, &mut g);
    if monitor(0, x, e, 0.0) == Control::Stop {
        return (LbfgsExit::Stopped, 0);
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    for it in 1..=opts.max_iters {
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        let rhos: Vec<f64> = (0..k).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
        for i in (0..k).rev() {
            alphas[i] = rhos[i] * dot(&s_hist[i], &q);
            for j in 0..n {
                q[j] -= alphas[i] * y_hist[i][j];
            }
        }
        let gamma = if k > 0 { dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]) } else { 1.0 };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for i in 0..k {
            let b = rhos[i] * dot(&y_hist[i], &q);
            for j in 0..n {
                q[j] += s_hist[i][j] * (alphas[i] - b);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if k == 0 { opts.initial_step } else { 1.0 };
        let mut en;
        loop {
            for j in 0..n {
                xn[j] = x[j] + step * dir[j];
            }
            en = f(&xn, &mut gn);
            if en.is_finite() && en <= e + opts.armijo * step * slope {
                break;
            }
            step *= opts.backtrack;
            if step < opts.min_step {
                return (LbfgsExit::LineSearchFailed, it);
            }
        }
        let s: Vec<f64> = (0..n).map(|j| xn[j] - x[j]).collect();
        let y: Vec<f64> = (0..n).map(|j| gn[j] - g[j]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        std::mem::swap(x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        e = en;
        if monitor(it, x, e, step) == Control::Stop {
            return (LbfgsExit::Stopped, it);
        }
    }
    (LbfgsExit::MaxIters, opts.max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let (_, _) = lbfgs(
            &mut x,
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &LbfgsOptions { initial_step: 1e-3, ..Default::default() },
            |_, _, e, _| if e < 1e-20 { Control::Stop } else { Control::Continue },
        );
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pcg_solves_spd() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let apply = |v: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * v[j]).sum()).collect::<Vec<f64>>();
        let b = [1.0, 2.0, 3.0];
        let (x, info) = pcg(apply, |r| r.to_vec(), &b, 1e-14, 50);
        let ax = apply(&x);
        assert!(info.relative_residual < 1e-13);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn herm_fn_square_root() {
        let a = [C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(3.0, 0.0)];
        let s = herm_fn(2, &a, f64::sqrt);
        let mut sq = [C64::new(0.0, 0.0); 4];
        mat_mul(2, &s, &s, &mut sq);
        for i in 0..4 {
            assert!((sq[i] - a[i]).norm() < 1e-12);
        }
    }
}
