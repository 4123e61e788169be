//! Gauss–Legendre nodes and normalized Legendre tables on [-1, 1].

use std::f64::consts::PI;

/// Nodes in ascending order and weights summing to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, pm1) = legendre_pair(n, z);
            let dz = p / (n as f64 * (z * p - pm1) / (z * z - 1.0));
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (p, pm1) = legendre_pair(n, z);
        let dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = wi;
        w[i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// (P_n(z), P_{n-1}(z)) by the three-term recurrence.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for l in 1..n {
        let l = l as f64;
        let p2 = ((2.0 * l + 1.0) * z * p1 - l * p0) / (l + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Orthonormal Legendre values and derivatives at `x`, row-major `[node][degree]`,
/// degrees `0..lmax`.
pub fn normalized_tables(x: &[f64], lmax: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut val = vec![0.0; n * lmax];
    let mut der = vec![0.0; n * lmax];
    for (i, &z) in x.iter().enumerate() {
        let mut pm1 = 0.0;
        let mut p = 1.0;
        for l in 0..lmax {
            let lf = l as f64;
            let norm = ((2.0 * lf + 1.0) / 2.0).sqrt();
            let dp = if l == 0 { 0.0 } else { lf * (z * p - pm1) / (z * z - 1.0) };
            val[i * lmax + l] = norm * p;
            der[i * lmax + l] = norm * dp;
            let next = ((2.0 * lf + 1.0) * z * p - lf * pm1) / (lf + 1.0);
            pm1 = p;
            p = next;
        }
    }
    (val, der)
}
