//! Verification shared by the solvers: the σ one-form, the weight along a
//! diagonal flow, and identity audits of a solved state.

use std::f64::consts::PI;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::futaki::{futaki_pairing_with_norm, monomial_norm};
use crate::gravitating::{kahler_einstein_residual, monitor_estimates, moving_metric, residuals_gravitating, topological_c, GravSolveState, ModelParams};
use crate::higgs::{Divisor, DivisorPoint};
use crate::surface::{smooth_random_field, ScalarField, SurfaceGrid};

/// Tangent vector at `(ω, h)`: a Kähler potential `φ̇` with `ω̇ = dd^c φ̇`
/// and an endomorphism `ḣ = h⁻¹ dh/ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub potential: ScalarField,
    pub hermitian: ScalarField,
}

impl Direction {
    pub fn sup_norm(&self) -> f64 {
        self.potential.sup_norm().max(self.hermitian.sup_norm())
    }
}

/// Subtracts the `ω`-mean from `potential`, with `ω = (1 − Δ₀v)ω₀`.
pub fn normalize_potential(grid: &SurfaceGrid, v: &ScalarField, potential: &ScalarField) -> Result<ScalarField> {
    let w = grid.laplacian(v)?.map(|x| 1.0 - x)?;
    let mass = grid.integrate(&w)?;
    let mean = grid.integrate(&potential.zip_with(&w, |a, b| a * b)?)? / mass;
    potential.map(|x| x - mean)
}

/// `σ(φ̇, ḣ) = −4α∫ḣ(iΛF + ½|φ|² − τ/2)ω − ∫φ̇(S + αΔ_ω|φ|² − 2ατ iΛF)ω`.
///
/// Vanishes for every direction exactly at solutions of the coupled
/// equations. The potential must have zero `ω`-mean.
pub fn sigma_one_form(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField, direction: &Direction) -> Result<f64> {
    if direction.potential.grid_id() != grid.id() || direction.hermitian.grid_id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    let m = moving_metric(state, params, grid, higgs)?;
    let wq = grid.weights();
    let phi = direction.potential.values();
    let hdot = direction.hermitian.values();
    let (alpha, tau) = (params.alpha, params.tau);
    let mut mean = 0.0;
    let mut abs = 0.0;
    let mut sigma = 0.0;
    for i in 0..wq.len() {
        let omega = wq[i] * m.density[i];
        mean += phi[i] * omega;
        abs += phi[i].abs() * omega;
        let first = m.curvature_contraction[i] + 0.5 * m.higgs[i] - 0.5 * tau;
        let second = m.scalar_curvature[i] + alpha * m.laplacian_higgs[i] - 2.0 * alpha * tau * m.curvature_contraction[i];
        sigma += (-4.0 * alpha * hdot[i] * first - phi[i] * second) * omega;
    }
    if mean.abs() > 1e-10 * abs.max(1.0) {
        return Err(Error::Normalization(mean));
    }
    Ok(sigma)
}

/// `σ` along the diagonal flow `z ↦ e^{-s}z` started at the Fubini–Study
/// pair with Higgs field the monomial with zeros only at `0` and `∞`.
///
/// The flow fixes the divisor, so the pulled-back Higgs norm is the monomial
/// norm rescaled by `e^{s(N − 2ℓ)}`, `ℓ` the multiplicity at `0`, and the
/// weight at time `s` is `2 Im F` for that norm.
pub fn weight_along_flow(d: &Divisor, alpha: f64, tau: f64, flow_times: &[f64], grid: &SurfaceGrid) -> Result<Vec<f64>> {
    if !grid.is_sphere() {
        return Err(Error::GridKind { expected: "sphere" });
    }
    let zero = DivisorPoint::Finite(num_complex::Complex64::new(0.0, 0.0));
    if d.multiplicity_at(zero) + d.multiplicity_at(DivisorPoint::Infinity) != d.degree() {
        return Err(Error::Precondition("flow weights need a divisor supported on {0, ∞}".into()));
    }
    let n = d.degree();
    let l = d.multiplicity_at(zero);
    let mu = grid.sphere_mu()?;
    let base: Vec<f64> = mu.iter().map(|&m| monomial_norm(n, l, m)).collect();
    flow_times
        .iter()
        .map(|&s| {
            let scale = (s * (n as f64 - 2.0 * l as f64)).exp();
            let p = ScalarField::new(grid, base.iter().map(|b| b * scale).collect())?;
            Ok(2.0 * futaki_pairing_with_norm(l, n, alpha, tau, grid, &p)?.im)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    fn push(&mut self, name: &str, value: f64, target: f64, tol: f64, pass: bool) {
        self.checks.push(AuditCheck { name: name.into(), value, target, tol, pass: pass && value.is_finite() });
    }

    /// `|value − target| ≤ tol`.
    fn near(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        self.push(name, value, target, tol, (value - target).abs() <= tol);
    }

    /// `value ≤ target + tol`.
    fn below(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        self.push(name, value, target, tol, value <= target + tol);
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:.12e} {:.12e} {:.3e} {}", c.name, c.value, c.target, c.tol, if c.pass { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Tolerance on the pointwise equations in the moving metric.
    pub tol: f64,
    pub directions: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { tol: 1e-6, directions: 32, seed: 0x5eed }
    }
}

pub fn audit_state(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField) -> AuditReport {
    audit_state_with(state, params, grid, higgs, &AuditOptions::default())
}

pub fn audit_state_with(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField, opts: &AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    let tol = opts.tol;
    let nf = params.n as f64;
    let c = topological_c(params);

    let min_w = grid.laplacian(&state.v).map(|l| 1.0 - l.max()).unwrap_or(f64::NAN);
    report.push("kahler_positivity", min_w, 0.0, 0.0, min_w > 0.0);

    let p_max = state
        .f
        .zip_with(higgs, |f, h| (2.0 * f).exp() * h)
        .map(|p| p.max())
        .unwrap_or(f64::NAN);
    report.below("higgs_bound", p_max, params.tau, 1e-8 * params.tau);

    match monitor_estimates(state, params, grid, higgs) {
        Ok(m) => {
            report.near("volume_identity", m.volume_integral, 2.0 * PI, 1e-8 * 2.0 * PI);
            report.near("higgs_identity", m.higgs_integral, -4.0 * PI * nf, 1e-8 * 4.0 * PI * nf);
        }
        Err(_) => {
            report.push("volume_identity", f64::NAN, 2.0 * PI, 1e-8 * 2.0 * PI, false);
            report.push("higgs_identity", f64::NAN, -4.0 * PI * nf, 1e-8 * 4.0 * PI * nf, false);
        }
    }

    let metric = moving_metric(state, params, grid, higgs).ok();
    let integrals = metric.as_ref().map(|m| {
        let wq = grid.weights();
        let mut s = 0.0;
        let mut ilf = 0.0;
        let mut higgs_excess = 0.0;
        for i in 0..wq.len() {
            let omega = wq[i] * m.density[i];
            s += m.scalar_curvature[i] * omega;
            ilf += m.curvature_contraction[i] * omega;
            higgs_excess += (m.higgs[i] - params.tau) * omega;
        }
        (s, ilf, higgs_excess)
    });
    let (s_int, ilf_int, excess) = integrals.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    report.near("gauss_bonnet", 2.0 * s_int, 4.0 * PI * params.chi(), 1e-4);
    report.near("degree", ilf_int, 2.0 * PI * nf, 1e-6);
    let c_meas = (s_int + params.alpha * params.tau * excess) / (2.0 * PI);
    report.near("topological_c", c_meas, c, 1e-4);

    let (r1, r2) = residuals_gravitating(state, params, grid, higgs).unwrap_or((f64::NAN, f64::NAN));
    report.below("residual_vortex", r1, 0.0, tol);
    report.below("residual_metric", r2, 0.0, tol);
    let ke = kahler_einstein_residual(state, params, grid, higgs).unwrap_or(f64::NAN);
    report.below("residual_kahler_einstein", ke, 0.0, 10.0 * tol);

    let mut worst = if metric.is_some() { 0.0 } else { f64::NAN };
    if metric.is_some() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.directions {
            let raw = smooth_random_field(grid, &mut rng, 1.0);
            let hermitian = smooth_random_field(grid, &mut rng, 1.0);
            let sigma = normalize_potential(grid, &state.v, &raw).and_then(|potential| {
                let dir = Direction { potential, hermitian };
                let scale = dir.sup_norm().max(1e-300);
                sigma_one_form(state, params, grid, higgs, &dir).map(|s| s.abs() / scale)
            });
            worst = match sigma {
                Ok(s) if s.is_finite() => f64::max(worst, s),
                _ => f64::NAN,
            };
            if worst.is_nan() {
                break;
            }
        }
    }
    report.below("sigma_vanishing", worst, 0.0, 10.0 * tol);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::futaki::maximal_weight;
    use crate::gravitating::solve_continuity;
    use crate::higgs::higgs_norm;
    use crate::surface::{make_sphere_grid, make_torus_grid};
    use num_complex::Complex64;

    fn torus_state(alpha: f64) -> (SurfaceGrid, ScalarField, ModelParams, GravSolveState) {
        let g = make_torus_grid(24, 24, Complex64::new(0.0, 1.0)).unwrap();
        let d = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.5, 0.5)), 1)]).unwrap();
        let h = higgs_norm(&d, &g).unwrap();
        let params = ModelParams::new(alpha, 6.0, 1, 1).unwrap();
        let s = solve_continuity(&g, &h, &params, 1e-10).unwrap().pop().unwrap();
        (g, h, params, s)
    }

    #[test]
    fn converged_torus_state_passes_every_check() {
        let (g, h, params, s) = torus_state(0.03);
        let report = audit_state(&s, &params, &g, &h);
        assert!(report.all_pass(), "{report}");
        assert_eq!(report.to_string().lines().count(), report.checks.len());
        assert_eq!(report, audit_state(&s, &params, &g, &h));
    }

    #[test]
    fn raising_f_breaks_the_higgs_bound() {
        let (g, h, params, mut s) = torus_state(0.03);
        s.f = s.f.map(|x| x + 0.5).unwrap();
        let report = audit_state(&s, &params, &g, &h);
        assert!(!report.get("higgs_bound").unwrap().pass);
        assert!(!report.all_pass());
    }

    #[test]
    fn decoupled_state_measures_gauss_bonnet_only() {
        let (g, h, params, s) = torus_state(0.0);
        let report = audit_state(&s, &params, &g, &h);
        let c = report.get("topological_c").unwrap();
        assert_eq!(c.target, 0.0);
        assert!(c.pass && report.get("gauss_bonnet").unwrap().pass, "{report}");
    }

    #[test]
    fn sigma_is_linear_and_detects_non_solutions() {
        let (g, h, params, s) = torus_state(0.03);
        let zero = Direction { potential: ScalarField::constant(&g, 0.0), hermitian: ScalarField::constant(&g, 0.0) };
        assert_eq!(sigma_one_form(&s, &params, &g, &h, &zero).unwrap(), 0.0);

        let mut bad = s.clone();
        bad.f = bad.f.map(|x| x + 0.3).unwrap();
        // pair against the first residual itself
        let m = moving_metric(&bad, &params, &g, &h).unwrap();
        let r: Vec<f64> = (0..g.len()).map(|i| m.curvature_contraction[i] + 0.5 * (m.higgs[i] - params.tau)).collect();
        let dir = Direction { potential: ScalarField::constant(&g, 0.0), hermitian: ScalarField::new(&g, r).unwrap() };
        let sigma = sigma_one_form(&bad, &params, &g, &h, &dir).unwrap();
        assert!(sigma.abs() / dir.sup_norm() > 1e-2, "{sigma}");
    }

    #[test]
    fn unnormalized_potential_is_rejected() {
        let (g, h, params, s) = torus_state(0.03);
        let dir = Direction { potential: ScalarField::constant(&g, 1.0), hermitian: ScalarField::constant(&g, 0.0) };
        assert!(matches!(sigma_one_form(&s, &params, &g, &h, &dir), Err(Error::Normalization(_))));
    }

    #[test]
    fn flow_weight_matches_maximal_weight() {
        let g = make_sphere_grid(48, 96).unwrap();
        let zero = DivisorPoint::Finite(Complex64::new(0.0, 0.0));
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let w = weight_along_flow(&Divisor::from_pairs(&[(zero, 2)]).unwrap(), 1.0, 6.0, &times, &g).unwrap();
        assert!(w.windows(2).all(|p| p[1] >= p[0] - 1e-9 * p[0].abs()));
        let target = maximal_weight(2, 2, 1.0, 6.0);
        assert!((target + 16.0 * PI).abs() < 1e-12);
        assert!((w[10] - target).abs() < 1e-6 * target.abs(), "{w:?}");

        let pair = Divisor::from_pairs(&[(zero, 1), (DivisorPoint::Infinity, 1)]).unwrap();
        let w = weight_along_flow(&pair, 1.0, 6.0, &times, &g).unwrap();
        assert!(w.iter().all(|x| x.abs() < 1e-8), "{w:?}");

        let off = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(1.0, 0.0)), 2)]).unwrap();
        assert!(weight_along_flow(&off, 1.0, 6.0, &times, &g).is_err());
    }
}
