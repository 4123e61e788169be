use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(super) struct TorusOps {
    n1: usize,
    n2: usize,
    /// Chart-to-physical length scale, `s² Im τ_lat = 2π`.
    pub scale: f64,
    eig: Vec<f64>,
    ku: Vec<f64>,
    kw: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

fn signed(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Representatives of a wavenumber; two of them at an even-length Nyquist index.
fn aliases(k: usize, n: usize) -> Vec<f64> {
    if n % 2 == 0 && k == n / 2 {
        vec![(n / 2) as f64, -((n / 2) as f64)]
    } else {
        vec![signed(k, n) as f64]
    }
}

impl TorusOps {
    pub fn new(n1: usize, n2: usize, modulus: Complex64) -> Self {
        let (a, b) = (modulus.re, modulus.im);
        let scale = (2.0 * PI / b).sqrt();
        let c = (2.0 * PI / scale).powi(2);
        let mut eig = vec![0.0; n1 * n2];
        let mut ku = vec![0.0; n1 * n2];
        let mut kw = vec![0.0; n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                let r1 = aliases(i, n1);
                let r2 = aliases(j, n2);
                let mut s = 0.0;
                for k1 in &r1 {
                    for k2 in &r2 {
                        s += k1 * k1 + ((k2 - a * k1) / b).powi(2);
                    }
                }
                eig[i * n2 + j] = c * s / (r1.len() * r2.len()) as f64;
                if r1.len() == 1 && r2.len() == 1 {
                    ku[i * n2 + j] = 2.0 * PI * r1[0] / scale;
                    kw[i * n2 + j] = 2.0 * PI * (r2[0] - a * r1[0]) / (b * scale);
                }
            }
        }
        let mut planner = FftPlanner::new();
        TorusOps {
            n1,
            n2,
            scale,
            eig,
            ku,
            kw,
            row_fwd: planner.plan_fft_forward(n2),
            row_inv: planner.plan_fft_inverse(n2),
            col_fwd: planner.plan_fft_forward(n1),
            col_inv: planner.plan_fft_inverse(n1),
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        data
    }

    fn inverse_real(&self, mut data: Vec<Complex64>, out: &mut [f64]) {
        self.transform(&mut data, false);
        let norm = 1.0 / (self.n1 * self.n2) as f64;
        for (o, d) in out.iter_mut().zip(&data) {
            *o = d.re * norm;
        }
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (rows, cols) = if forward { (&self.row_fwd, &self.col_fwd) } else { (&self.row_inv, &self.col_inv) };
        for row in data.chunks_mut(self.n2) {
            rows.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.n1];
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                col[i] = data[i * self.n2 + j];
            }
            cols.process(&mut col);
            for i in 0..self.n1 {
                data[i * self.n2 + j] = col[i];
            }
        }
    }

    pub fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let mut h = self.forward(x);
        for (c, e) in h.iter_mut().zip(&self.eig) {
            *c *= e;
        }
        self.inverse_real(h, out);
    }

    pub fn shifted_inverse(&self, shift: f64, b: &[f64], out: &mut [f64]) {
        let mut h = self.forward(b);
        for (c, e) in h.iter_mut().zip(&self.eig) {
            let d = e + shift;
            *c = if d.abs() > 1e-300 { *c / d } else { Complex64::new(0.0, 0.0) };
        }
        self.inverse_real(h, out);
    }

    pub fn block_inverse(&self, a: [[f64; 2]; 2], b: &[f64], out: &mut [f64]) {
        let n = self.n1 * self.n2;
        let mut h1 = self.forward(&b[..n]);
        let mut h2 = self.forward(&b[n..]);
        for k in 0..n {
            let e = self.eig[k];
            let m = [[e + a[0][0], a[0][1]], [a[1][0], e + a[1][1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let scale = m[0][0].abs().max(m[1][1].abs()).max(1e-300);
            if det.abs() > 1e-12 * scale * scale {
                let (u, v) = (h1[k], h2[k]);
                h1[k] = (m[1][1] * u - m[0][1] * v) / det;
                h2[k] = (m[0][0] * v - m[1][0] * u) / det;
            }
        }
        let (o1, o2) = out.split_at_mut(n);
        self.inverse_real(h1, o1);
        self.inverse_real(h2, o2);
    }

    pub fn gradient_squared(&self, x: &[f64]) -> Vec<f64> {
        let h = self.forward(x);
        let i = Complex64::new(0.0, 1.0);
        let hu: Vec<Complex64> = h.iter().zip(&self.ku).map(|(c, k)| c * i * k).collect();
        let hw: Vec<Complex64> = h.iter().zip(&self.kw).map(|(c, k)| c * i * k).collect();
        let n = x.len();
        let mut gu = vec![0.0; n];
        let mut gw = vec![0.0; n];
        self.inverse_real(hu, &mut gu);
        self.inverse_real(hw, &mut gw);
        gu.iter().zip(&gw).map(|(a, b)| a * a + b * b).collect()
    }
}
