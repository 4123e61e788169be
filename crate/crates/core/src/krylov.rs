//! Matrix-free Krylov solvers in a weighted inner product `⟨x, y⟩ = Σ wᵢ xᵢ yᵢ`.
//!
//! The weights are the quadrature weights of the grid, so the surface Laplacian
//! is symmetric in this inner product and CG applies to `Δ + diag(d)`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final residual norm relative to `‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
}

fn norm(w: &[f64], x: &[f64]) -> f64 {
    dot(w, x, x).max(0.0).sqrt()
}

/// Preconditioned conjugate gradients for a symmetric positive definite `A`.
/// `x` holds the initial guess and receives the solution.
pub fn pcg(
    a: impl Fn(&[f64], &mut [f64]),
    m_inv: impl Fn(&[f64], &mut [f64]),
    w: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = norm(w, b).max(1e-300);
    let mut r = vec![0.0; n];
    a(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    m_inv(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(w, &r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(w, &r) / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        a(&p, &mut ap);
        let pap = dot(w, &p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = norm(w, &r) / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        m_inv(&r, &mut z);
        let rz_new = dot(w, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    KrylovStats { iterations: it, relative_residual: rel, converged: rel <= tol }
}

/// Restarted GMRES with right preconditioning. `x` holds the initial guess.
#[allow(clippy::too_many_arguments)]
pub fn gmres(
    a: impl Fn(&[f64], &mut [f64]),
    m_inv: impl Fn(&[f64], &mut [f64]),
    w: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let bnorm = norm(w, b).max(1e-300);
    let mut total = 0;
    let mut rel;
    loop {
        let mut r = vec![0.0; n];
        a(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(w, &r);
        rel = beta / bnorm;
        if rel <= tol || total >= max_iter {
            break;
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut zk = vec![0.0; n];
            m_inv(&v[k], &mut zk);
            let mut vk = vec![0.0; n];
            a(&zk, &mut vk);
            z.push(zk);
            // Modified Gram–Schmidt, twice for stability.
            for _ in 0..2 {
                for (j, vj) in v.iter().enumerate() {
                    let hj = dot(w, &vk, vj);
                    h[j][k] += hj;
                    for (a, b) in vk.iter_mut().zip(vj) {
                        *a -= hj * b;
                    }
                }
            }
            let hn = norm(w, &vk);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            if (g[k + 1].abs() / bnorm) <= tol || hn == 0.0 {
                break;
            }
            v.push(vk.iter().map(|a| a / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = ((i + 1)..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        if k_used == 0 {
            break;
        }
    }
    KrylovStats { iterations: total, relative_residual: rel, converged: rel <= tol }
}
