use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::legendre::{gauss_legendre, normalized_tables};

type C = Complex64;

/// Zonal operators of the sphere of area 2π (radius² = 1/2).
///
/// Wavenumber `m` acts on a latitude column by `L₀ + 2m²/(1-μ²)` for even `m`
/// and `L₁ + 2(m²-1)/(1-μ²)` for odd `m`. `L₀` is exact on polynomials in `μ` and
/// `L₁` on `√(1-μ²)` times a polynomial, which are the shapes the `m`-th Fourier
/// coefficient of a smooth field takes. Both are self-adjoint for the Gauss weights.
pub(super) struct SphereOps {
    nt: usize,
    np: usize,
    pub mu: Vec<f64>,
    pub gw: Vec<f64>,
    l0: Vec<f64>,
    l1: Vec<f64>,
    d0: Vec<f64>,
    /// `1/(1-μ²)`.
    pole: Vec<f64>,
    /// `√(1-μ²)`.
    sin: Vec<f64>,
    modes: OnceLock<Vec<ModeEigen>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// `L_m = V Λ Vᵀ G` with `Vᵀ G V = I`.
struct ModeEigen {
    vals: Vec<f64>,
    vecs: Vec<f64>,
}

fn dense_from_basis(basis: &[f64], eig: &[f64], gw: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += basis[i * n + l] * eig[l] * basis[k * n + l];
            }
            out[i * n + k] = s * gw[k];
        }
    }
    out
}

impl SphereOps {
    pub fn new(nt: usize, np: usize) -> Self {
        let n = nt;
        let (mu, gw) = gauss_legendre(n);
        let (leg, dleg) = normalized_tables(&mu, n + 1);
        let sin: Vec<f64> = mu.iter().map(|m| (1.0 - m * m).sqrt()).collect();
        // zonal block: orthonormal Legendre polynomials of degree 0..n-1
        let c0: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |l| (i, l))).map(|(i, l)| leg[i * (n + 1) + l]).collect();
        let eig0: Vec<f64> = (0..n).map(|l| 2.0 * (l * (l + 1)) as f64).collect();
        let mut l0 = dense_from_basis(&c0, &eig0, &gw, n);
        for i in 0..n {
            let rs: f64 = l0[i * n..(i + 1) * n].iter().sum();
            l0[i * n + i] -= rs;
        }
        // m = 1 block: sin θ P_l'(μ) for l = 1..n, orthonormalized under the Gauss weights
        let mut c1: Vec<f64> =
            (0..n).flat_map(|i| (0..n).map(move |l| (i, l))).map(|(i, l)| sin[i] * dleg[i * (n + 1) + l + 1]).collect();
        for a in 0..n {
            for b in 0..a {
                let p: f64 = (0..n).map(|i| gw[i] * c1[i * n + a] * c1[i * n + b]).sum();
                for i in 0..n {
                    c1[i * n + a] -= p * c1[i * n + b];
                }
            }
            let norm: f64 = (0..n).map(|i| gw[i] * c1[i * n + a] * c1[i * n + a]).sum::<f64>().sqrt();
            for i in 0..n {
                c1[i * n + a] /= norm;
            }
        }
        let eig1: Vec<f64> = (1..=n).map(|l| 2.0 * (l * (l + 1)) as f64).collect();
        let l1 = dense_from_basis(&c1, &eig1, &gw, n);
        let mut d0 = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let mut d = 0.0;
                for l in 0..n {
                    d += dleg[i * (n + 1) + l] * leg[k * (n + 1) + l];
                }
                d0[i * n + k] = d * gw[k];
            }
            let ds: f64 = d0[i * n..(i + 1) * n].iter().sum();
            d0[i * n + i] -= ds;
        }
        let pole = mu.iter().map(|m| 1.0 / (1.0 - m * m)).collect();
        let mut planner = FftPlanner::new();
        SphereOps {
            nt,
            np,
            mu,
            gw,
            l0,
            l1,
            d0,
            pole,
            sin,
            modes: OnceLock::new(),
            fwd: planner.plan_fft_forward(np),
            inv: planner.plan_fft_inverse(np),
        }
    }

    fn wavenumber(&self, k: usize) -> usize {
        k.min(self.np - k)
    }

    fn forward(&self, x: &[f64]) -> Vec<C> {
        let mut data: Vec<C> = x.iter().map(|&v| C::new(v, 0.0)).collect();
        for row in data.chunks_mut(self.np) {
            self.fwd.process(row);
        }
        data
    }

    fn inverse_real(&self, mut data: Vec<C>, out: &mut [f64]) {
        for row in data.chunks_mut(self.np) {
            self.inv.process(row);
        }
        let norm = 1.0 / self.np as f64;
        for (o, d) in out.iter_mut().zip(&data) {
            *o = d.re * norm;
        }
    }

    fn column(&self, data: &[C], k: usize) -> Vec<C> {
        (0..self.nt).map(|i| data[i * self.np + k]).collect()
    }

    fn set_column(&self, data: &mut [C], k: usize, col: &[C]) {
        for i in 0..self.nt {
            data[i * self.np + k] = col[i];
        }
    }

    fn dense(&self, mat: &[f64], col: &[C]) -> Vec<C> {
        let n = self.nt;
        (0..n)
            .map(|i| {
                let row = &mat[i * n..(i + 1) * n];
                let (mut re, mut im) = (0.0, 0.0);
                for (a, c) in row.iter().zip(col) {
                    re += a * c.re;
                    im += a * c.im;
                }
                C::new(re, im)
            })
            .collect()
    }

    fn base_and_shift(&self, m: usize) -> (&[f64], f64) {
        if m % 2 == 0 {
            (&self.l0, 2.0 * (m * m) as f64)
        } else {
            (&self.l1, 2.0 * (m * m) as f64 - 2.0)
        }
    }

    fn zonal_laplacian(&self, m: usize, col: &[C]) -> Vec<C> {
        let (base, c) = self.base_and_shift(m);
        let mut out = self.dense(base, col);
        if c != 0.0 {
            for i in 0..self.nt {
                out[i] += col[i] * (c * self.pole[i]);
            }
        }
        out
    }

    pub fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let mut data = self.forward(x);
        for k in 0..self.np {
            let col = self.column(&data, k);
            let r = self.zonal_laplacian(self.wavenumber(k), &col);
            self.set_column(&mut data, k, &r);
        }
        self.inverse_real(data, out);
    }

    fn modes(&self) -> &[ModeEigen] {
        self.modes.get_or_init(|| {
            let n = self.nt;
            let sq: Vec<f64> = self.gw.iter().map(|g| g.sqrt()).collect();
            (0..=self.np / 2)
                .map(|m| {
                    let (base, c) = self.base_and_shift(m);
                    // G^{1/2} L G^{-1/2}, symmetric up to roundoff
                    let mut a = DMatrix::<f64>::zeros(n, n);
                    for i in 0..n {
                        for k in 0..n {
                            a[(i, k)] = sq[i] * base[i * n + k] / sq[k];
                        }
                        a[(i, i)] += c * self.pole[i];
                    }
                    let a = (&a + a.transpose()) * 0.5;
                    let e = SymmetricEigen::new(a);
                    let mut vecs = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            vecs[i * n + j] = e.eigenvectors[(i, j)] / sq[i];
                        }
                    }
                    ModeEigen { vals: e.eigenvalues.iter().cloned().collect(), vecs }
                })
                .collect()
        })
    }

    /// Applies `f(λ)` to a column through the mode eigenbasis.
    fn spectral_map(&self, mode: &ModeEigen, cols: &mut [Vec<C>], f: impl Fn(f64, &mut [C])) {
        let n = self.nt;
        let mut coef: Vec<Vec<C>> = cols
            .iter()
            .map(|col| {
                (0..n)
                    .map(|j| (0..n).fold(C::new(0.0, 0.0), |s, i| s + col[i] * (mode.vecs[i * n + j] * self.gw[i])))
                    .collect()
            })
            .collect();
        for j in 0..n {
            let mut v: Vec<C> = coef.iter().map(|c| c[j]).collect();
            f(mode.vals[j], &mut v);
            for (c, x) in coef.iter_mut().zip(v) {
                c[j] = x;
            }
        }
        for (col, c) in cols.iter_mut().zip(&coef) {
            for i in 0..n {
                col[i] = (0..n).fold(C::new(0.0, 0.0), |s, j| s + c[j] * mode.vecs[i * n + j]);
            }
        }
    }

    /// `‖high modes‖ / ‖x‖` in L², where high modes are the eigenfunctions of
    /// the discrete Laplacian with eigenvalue above `2L(L+1)`.
    pub fn spectral_tail(&self, x: &[f64], l_cut: usize) -> f64 {
        let modes = self.modes();
        let data = self.forward(x);
        let n = self.nt;
        let cut = 2.0 * (l_cut * (l_cut + 1)) as f64;
        let (mut high, mut total) = (0.0, 0.0);
        for k in 0..self.np {
            let mode = &modes[self.wavenumber(k)];
            let col = self.column(&data, k);
            for j in 0..n {
                let c = (0..n).fold(C::new(0.0, 0.0), |s, i| s + col[i] * (mode.vecs[i * n + j] * self.gw[i]));
                total += c.norm_sqr();
                if mode.vals[j] > cut {
                    high += c.norm_sqr();
                }
            }
        }
        if total > 0.0 {
            (high / total).sqrt()
        } else {
            0.0
        }
    }

    /// Laplacian restricted to eigenfunctions with eigenvalue at most `2L(L+1)`.
    /// The discarded part holds the polar modes that amplify roundoff.
    pub fn truncated_laplacian(&self, x: &[f64], l_cut: usize, out: &mut [f64]) {
        let modes = self.modes();
        let cut = 2.0 * (l_cut * (l_cut + 1)) as f64;
        let mut data = self.forward(x);
        for k in 0..self.np {
            let mut cols = vec![self.column(&data, k)];
            self.spectral_map(&modes[self.wavenumber(k)], &mut cols, |lam, v| {
                v[0] = if lam <= cut { v[0] * lam } else { C::new(0.0, 0.0) };
            });
            self.set_column(&mut data, k, &cols[0]);
        }
        self.inverse_real(data, out);
    }

    pub fn shifted_inverse(&self, shift: f64, b: &[f64], out: &mut [f64]) {
        let modes = self.modes();
        let mut data = self.forward(b);
        for k in 0..self.np {
            let mut cols = vec![self.column(&data, k)];
            self.spectral_map(&modes[self.wavenumber(k)], &mut cols, |lam, v| {
                let d = lam + shift;
                v[0] = if d.abs() > 1e-9 { v[0] / d } else { C::new(0.0, 0.0) };
            });
            self.set_column(&mut data, k, &cols[0]);
        }
        self.inverse_real(data, out);
    }

    pub fn block_inverse(&self, a: [[f64; 2]; 2], b: &[f64], out: &mut [f64]) {
        let modes = self.modes();
        let n = self.nt * self.np;
        let mut d1 = self.forward(&b[..n]);
        let mut d2 = self.forward(&b[n..]);
        for k in 0..self.np {
            let mut cols = vec![self.column(&d1, k), self.column(&d2, k)];
            self.spectral_map(&modes[self.wavenumber(k)], &mut cols, |lam, v| {
                let m = [[lam + a[0][0], a[0][1]], [a[1][0], lam + a[1][1]]];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                let scale = m[0][0].abs().max(m[1][1].abs()).max(1e-300);
                if det.abs() > 1e-12 * scale * scale {
                    let (u, w) = (v[0], v[1]);
                    v[0] = (u * m[1][1] - w * m[0][1]) / det;
                    v[1] = (w * m[0][0] - u * m[1][0]) / det;
                }
            });
            self.set_column(&mut d1, k, &cols[0]);
            self.set_column(&mut d2, k, &cols[1]);
        }
        let (o1, o2) = out.split_at_mut(n);
        self.inverse_real(d1, o1);
        self.inverse_real(d2, o2);
    }

    /// `(∂_μ f, ∂_ψ f)`. Odd wavenumbers are differentiated as `√(1-μ²)·g`.
    pub fn derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let data = self.forward(x);
        let mut dmu = data.clone();
        let mut dpsi = data.clone();
        for k in 0..self.np {
            let m = self.wavenumber(k);
            let col = self.column(&data, k);
            let r = if m % 2 == 0 {
                self.dense(&self.d0, &col)
            } else {
                let g: Vec<C> = col.iter().zip(&self.sin).map(|(c, s)| c / s).collect();
                let dg = self.dense(&self.d0, &g);
                (0..self.nt).map(|i| dg[i] * self.sin[i] - g[i] * (self.mu[i] / self.sin[i])).collect()
            };
            self.set_column(&mut dmu, k, &r);
            let ks = if 2 * k == self.np {
                0.0
            } else if k <= self.np / 2 {
                k as f64
            } else {
                k as f64 - self.np as f64
            };
            let r: Vec<C> = col.iter().map(|c| c * C::new(0.0, ks)).collect();
            self.set_column(&mut dpsi, k, &r);
        }
        let n = x.len();
        let mut gm = vec![0.0; n];
        let mut gp = vec![0.0; n];
        self.inverse_real(dmu, &mut gm);
        self.inverse_real(dpsi, &mut gp);
        (gm, gp)
    }

    pub fn gradient_squared(&self, x: &[f64]) -> Vec<f64> {
        let (gm, gp) = self.derivatives(x);
        (0..x.len())
            .map(|k| {
                let s = 1.0 - self.mu[k / self.np].powi(2);
                2.0 * (s * gm[k] * gm[k] + gp[k] * gp[k] / s)
            })
            .collect()
    }
}
