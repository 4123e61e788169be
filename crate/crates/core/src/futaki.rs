//! Futaki invariant of `(P¹, O(N), z^ℓ)`: closed form, quadrature, maximal
//! weight, and the extremal-pair identities for `N = 1`.
//!
//! Quadrature works in `μ = cos θ`, with `|z|²/(1+|z|²) = (1+μ)/2`. The pairing with
//! the diagonal generator `y = diag(0, 1)` uses
//! - vertical part `A y = ℓ − N(1+μ)/2`,
//! - holomorphy potential `φ = (i/2) μ`,
//! - Higgs norm `|z|^{2ℓ}/(1+|z|²)^N = ((1+μ)/2)^ℓ ((1−μ)/2)^{N−ℓ}`.
//!
//! A conformal pair `(ω, h) = ((1 − Δ₀v) ω_FS, h_FS e^{2f})` with azimuthal `f, v`
//! shifts `A y` by `(1−μ²) ∂_μ f` and `φ` by `i (1−μ²) ∂_μ v`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{ScalarField, SurfaceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FutakiMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutakiConfig {
    pub n: u32,
    pub l: u32,
    pub alpha: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutakiParts {
    /// `∫ (A y) ω`.
    pub vertical: f64,
    /// `∫ (i A y − 2φ) |φ|² ω`, purely imaginary.
    pub higgs: Complex64,
    /// Contributions of the southern (`μ < 0`) and northern hemispheres.
    pub hemispheres: [Complex64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutakiResult {
    pub value: Complex64,
    pub method: FutakiMethod,
    pub config: FutakiConfig,
    pub parts: Option<FutakiParts>,
}

fn check_config(n: u32, l: u32, alpha: f64) -> Result<()> {
    if n == 0 || l >= n {
        return Err(Error::Precondition(format!("need 0 <= l < N, got l = {l}, N = {n}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("need alpha > 0, got {alpha}")));
    }
    Ok(())
}

/// `2πiα(2N − τ)(2ℓ − N)`.
pub fn futaki_closed_form(n: u32, l: u32, alpha: f64, tau: f64) -> Result<Complex64> {
    check_config(n, l, alpha)?;
    let (n, l) = (n as f64, l as f64);
    Ok(Complex64::new(0.0, 2.0 * PI * alpha * (2.0 * n - tau) * (2.0 * l - n)))
}

/// `4πα(τ − 2N)(N − 2ℓ)`, the weight of the ray generated by
/// `diag(N − 2ℓ − 1, N − 2ℓ + 1)` at the configuration `x₀^{N−ℓ} x₁^ℓ`.
pub fn maximal_weight(n: u32, l: u32, alpha: f64, tau: f64) -> f64 {
    let (n, l) = (n as f64, l as f64);
    4.0 * PI * alpha * (tau - 2.0 * n) * (n - 2.0 * l)
}

/// `|z^ℓ|²_{h_FS^N}` at `μ`.
pub fn monomial_norm(n: u32, l: u32, mu: f64) -> f64 {
    ((1.0 + mu) / 2.0).powi(l as i32) * ((1.0 - mu) / 2.0).powi((n - l) as i32)
}

/// Quadrature of the defining integral at the Fubini–Study pair.
pub fn futaki_quadrature(l: u32, n: u32, alpha: f64, tau: f64, grid: &SurfaceGrid) -> Result<FutakiResult> {
    check_config(n, l, alpha)?;
    let mu = grid.sphere_mu()?;
    let p: Vec<f64> = mu.iter().map(|&m| monomial_norm(n, l, m)).collect();
    let (value, parts) = pairing(grid, &mu, l, n, alpha, tau, &p, None)?;
    Ok(FutakiResult { value, method: FutakiMethod::Quadrature, config: FutakiConfig { n, l, alpha, tau }, parts: Some(parts) })
}

/// Quadrature with `|φ|²_{h_FS^N}` replaced by an arbitrary field `p` on the
/// Fubini–Study pair, still paired with `y` for exponent `ℓ`. Used along group
/// flows, where `p` is the norm of the moved section.
pub fn futaki_pairing_with_norm(l: u32, n: u32, alpha: f64, tau: f64, grid: &SurfaceGrid, p: &ScalarField) -> Result<Complex64> {
    if p.grid_id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    let mu = grid.sphere_mu()?;
    Ok(pairing(grid, &mu, l, n, alpha, tau, p.values(), None)?.0)
}

/// Quadrature at the conformal pair `((1 − Δ₀v) ω_FS, h_FS e^{2f})`; `f, v` must be
/// azimuthal and `1 − Δ₀v > 0`.
pub fn futaki_quadrature_perturbed(
    l: u32,
    n: u32,
    alpha: f64,
    tau: f64,
    grid: &SurfaceGrid,
    f: &ScalarField,
    v: &ScalarField,
) -> Result<Complex64> {
    check_config(n, l, alpha)?;
    let mu = grid.sphere_mu()?;
    for field in [f, v] {
        if grid.max_row_variance(field)? > 1e-20 {
            return Err(Error::Precondition("perturbation must be azimuthal".into()));
        }
    }
    let p: Vec<f64> = mu.iter().zip(f.values()).map(|(&m, f)| monomial_norm(n, l, m) * (2.0 * f).exp()).collect();
    Ok(pairing(grid, &mu, l, n, alpha, tau, &p, Some((f, v)))?.0)
}

#[allow(clippy::too_many_arguments)]
fn pairing(
    grid: &SurfaceGrid,
    mu: &[f64],
    l: u32,
    n: u32,
    alpha: f64,
    tau: f64,
    p: &[f64],
    pair: Option<(&ScalarField, &ScalarField)>,
) -> Result<(Complex64, FutakiParts)> {
    let len = grid.len();
    let nf = n as f64;
    let wq = grid.weights();
    let mut metric = vec![1.0; len];
    let mut ilf = vec![nf; len];
    let mut curv = vec![2.0; len];
    let mut ay: Vec<f64> = mu.iter().map(|m| l as f64 - nf * (1.0 + m) / 2.0).collect();
    let mut pot: Vec<f64> = mu.iter().map(|m| 0.5 * m).collect();
    if let Some((f, v)) = pair {
        let lv = grid.lap(v.values());
        metric = lv.iter().map(|x| 1.0 - x).collect();
        if let Some(k) = metric.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::KahlerPositivityLost { t: 0.0, min_w: metric[k] });
        }
        let lf = grid.lap(f.values());
        let lnw: Vec<f64> = metric.iter().map(|w| w.ln()).collect();
        let llnw = grid.lap(&lnw);
        let fm = grid.mu_derivative(f)?;
        let vm = grid.mu_derivative(v)?;
        for k in 0..len {
            let s2 = 1.0 - mu[k] * mu[k];
            ilf[k] = (nf + lf[k]) / metric[k];
            curv[k] = (2.0 + 0.5 * llnw[k]) / metric[k];
            ay[k] += s2 * fm.values()[k];
            pot[k] += s2 * vm.values()[k];
        }
    }
    let omega: Vec<f64> = wq.iter().zip(&metric).map(|(a, b)| a * b).collect();
    let vol: f64 = omega.iter().sum();
    let pot_mean = pot.iter().zip(&omega).map(|(a, b)| a * b).sum::<f64>() / vol;
    pot.iter_mut().for_each(|x| *x -= pot_mean);
    let lp = grid.lap(p);
    let mut total = Complex64::new(0.0, 0.0);
    let mut hemis = [Complex64::new(0.0, 0.0); 2];
    let mut vertical = 0.0;
    let mut higgs_part = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    for k in 0..len {
        let first = 4.0 * alpha * ay[k] * (ilf[k] + 0.5 * p[k] - 0.5 * tau);
        let second = pot[k] * (curv[k] + alpha * lp[k] / metric[k] - 2.0 * alpha * tau * ilf[k]);
        // φ = i·pot, so −∫φ(…) = −i∫pot(…).
        let term = i * (first - second) * omega[k];
        total += term;
        let side = if mu[k] < 0.0 { 0 } else if mu[k] > 0.0 { 1 } else { 2 };
        if side == 2 {
            hemis[0] += 0.5 * term;
            hemis[1] += 0.5 * term;
        } else {
            hemis[side] += term;
        }
        vertical += ay[k] * omega[k];
        higgs_part += i * (ay[k] - 2.0 * pot[k]) * p[k] * omega[k];
    }
    Ok((total, FutakiParts { vertical, higgs: higgs_part, hemispheres: hemis }))
}

/// Pairing with the nilpotent generator `y' = [[0,0],[1,0]]` at `ℓ = 0`, whose
/// vertical part is `−N z̄/(1+|z|²)` and potential `i z̄/(1+|z|²)`.
pub fn futaki_nilpotent_quadrature(n: u32, alpha: f64, tau: f64, grid: &SurfaceGrid) -> Result<Complex64> {
    check_config(n, 0, alpha)?;
    let mu = grid.sphere_mu()?;
    let nf = n as f64;
    let p: Vec<f64> = mu.iter().map(|&m| monomial_norm(n, 0, m)).collect();
    let lp = grid.lap(&p);
    let i = Complex64::new(0.0, 1.0);
    let mut total = Complex64::new(0.0, 0.0);
    for (k, pos) in grid.positions().iter().enumerate() {
        // z̄/(1+|z|²) = ½ sin θ e^{−iψ}
        let zb = Complex64::from_polar(0.5 * (1.0 - mu[k] * mu[k]).max(0.0).sqrt(), -pos.c2);
        let ay = -nf * zb;
        let pot = i * zb;
        let first = 4.0 * i * alpha * ay * (nf + 0.5 * p[k] - 0.5 * tau);
        let second = pot * (2.0 + alpha * lp[k] - 2.0 * alpha * tau * nf);
        total += (first - second) * grid.weights()[k];
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalDefects {
    /// `sup |Δ_ω |φ|²_h − 2(1 − |z|²)/(1 + |z|²)|`.
    pub laplacian: f64,
    /// `sup |∂̄|φ|²_h / (¼ ι_v ω) − 1|` in the normalization where the FS value is 1.
    pub dbar: f64,
}

impl ExtremalDefects {
    pub fn holds(&self, tol: f64) -> bool {
        self.laplacian < tol && self.dbar < tol
    }
}

/// Tolerance used by [`check_extremal_pair`].
pub const EXTREMAL_TOL: f64 = 1e-4;

/// Whether `(ω_FS, h_FS)` satisfies both extremal-pair identities for `φ = x₀`.
pub fn check_extremal_pair(grid: &SurfaceGrid) -> Result<bool> {
    Ok(extremal_pair_defects(grid, None)?.holds(EXTREMAL_TOL))
}

/// Identity defects for `N = 1`, `φ = x₀` at the FS pair or at a conformal pair
/// `((1 − Δ₀v) ω_FS, h_FS e^{2f})` given as `(f, v)`.
pub fn extremal_pair_defects(grid: &SurfaceGrid, pair: Option<(&ScalarField, &ScalarField)>) -> Result<ExtremalDefects> {
    let mu = grid.sphere_mu()?;
    let len = grid.len();
    let mut p: Vec<f64> = mu.iter().map(|m| (1.0 - m) / 2.0).collect();
    let mut metric = vec![1.0; len];
    if let Some((f, v)) = pair {
        if f.grid_id() != grid.id() || v.grid_id() != grid.id() {
            return Err(Error::GridMismatch);
        }
        for (pk, fk) in p.iter_mut().zip(f.values()) {
            *pk *= (2.0 * fk).exp();
        }
        metric = grid.lap(v.values()).iter().map(|x| 1.0 - x).collect();
        if let Some(k) = metric.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::KahlerPositivityLost { t: 0.0, min_w: metric[k] });
        }
    }
    let pf = ScalarField::new(grid, p.clone())?;
    let lp = grid.lap(&p);
    let pm = grid.mu_derivative(&pf)?;
    let pp = grid.psi_derivative(&pf)?;
    let mut lap_err: f64 = 0.0;
    let mut dbar_err: f64 = 0.0;
    for k in 0..len {
        let target = -2.0 * mu[k];
        lap_err = lap_err.max((lp[k] / metric[k] - target).abs());
        let s2 = 1.0 - mu[k] * mu[k];
        let ratio = Complex64::new(2.0 * pm.values()[k], 2.0 * pp.values()[k] / s2) / metric[k];
        dbar_err = dbar_err.max((ratio + 1.0).norm());
    }
    Ok(ExtremalDefects { laplacian: lap_err, dbar: dbar_err })
}
