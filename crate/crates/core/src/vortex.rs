//! Fixed-background vortex equation `Δ₀f + ½(e^{2f}|φ|²_{h₀} − τ) = −N`.
//!
//! Damped Newton on the sup-norm of the residual. Each linearization
//! `Δ₀ + diag(e^{2f}|φ|²)` is symmetric positive definite in the quadrature inner
//! product and is solved by conjugate gradients, preconditioned with
//! `(Δ₀ + mean)^{-1}`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::krylov::pcg;
use crate::surface::{ScalarField, SurfaceGrid, VOLUME};

/// Iterates below this value are treated as the `f → −∞` failure mode.
pub const DIVERGENCE_FLOOR: f64 = -50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_sup: f64,
    pub step_sup: f64,
    pub damping: f64,
    pub min_f: f64,
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexSolution {
    pub f: ScalarField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

impl VortexSolution {
    /// Per-iteration log, one whitespace-separated row per Newton step.
    pub fn write_log<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_history(&self.history, w)
    }
}

pub fn write_history<W: Write>(history: &[IterationRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# iteration residual_sup step_sup damping min_f krylov_iterations")?;
    for r in history {
        writeln!(
            w,
            "{} {:.6e} {:.6e} {:.6e} {:.6e} {}",
            r.iteration, r.residual_sup, r.step_sup, r.damping, r.min_f, r.krylov_iterations
        )?;
    }
    Ok(())
}

/// Pointwise residual `Δ₀f + ½(e^{2f}|φ|² − τ) + N`.
pub fn vortex_residual(grid: &SurfaceGrid, higgs: &ScalarField, degree: u32, tau: f64, f: &ScalarField) -> Result<ScalarField> {
    let lap = grid.laplacian(f)?;
    if higgs.grid_id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    Ok(ScalarField::from_raw(grid, residual(lap.values(), f.values(), higgs.values(), degree, tau)))
}

fn residual(lap: &[f64], f: &[f64], h: &[f64], degree: u32, tau: f64) -> Vec<f64> {
    split_residual(lap, f, 0.0, h, degree as f64 - 0.5 * tau)
}

/// Residual for `f = κ + g`; the constant `N − τ/2` is formed once so the
/// `e^{2f}` term is not swamped by cancellation when `f` is very negative.
fn split_residual(lap_g: &[f64], g: &[f64], kappa: f64, h: &[f64], c0: f64) -> Vec<f64> {
    lap_g.iter()
        .zip(g)
        .zip(h)
        .map(|((l, g), h)| l + 0.5 * (2.0 * (kappa + g)).exp() * h + c0)
        .collect()
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY })
}

/// The constant starting guess `½ ln(τ / (max|φ|² + τ))`.
pub fn initial_guess(grid: &SurfaceGrid, higgs: &ScalarField, tau: f64) -> ScalarField {
    ScalarField::constant(grid, 0.5 * (tau / (higgs.max() + tau)).ln())
}

/// Solves the vortex equation from the default constant guess.
pub fn solve_vortex(grid: &SurfaceGrid, higgs: &ScalarField, degree: u32, tau: f64, tol: f64, max_iter: usize) -> Result<VortexSolution> {
    let f0 = initial_guess(grid, higgs, tau);
    solve_vortex_from(grid, higgs, degree, tau, tol, max_iter, &f0)
}

pub fn solve_vortex_from(
    grid: &SurfaceGrid,
    higgs: &ScalarField,
    degree: u32,
    tau: f64,
    tol: f64,
    max_iter: usize,
    initial: &ScalarField,
) -> Result<VortexSolution> {
    if higgs.grid_id() != grid.id() || initial.grid_id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    if !(tol > 0.0) || !(tau > 0.0) || degree == 0 {
        return Err(Error::Precondition(format!("need tol > 0, tau > 0, N >= 1 (tol {tol}, tau {tau}, N {degree})")));
    }
    if higgs.min() < 0.0 || higgs.max() <= 0.0 {
        return Err(Error::Precondition("Higgs norm must be nonnegative and not identically zero".into()));
    }
    let h = higgs.values();
    let step_tol = tol.sqrt().min(1e-4);
    let c0 = degree as f64 - 0.5 * tau;
    // Iterate as a constant plus a weighted-mean-free part.
    let mut kappa = grid.integral(initial.values()) / VOLUME;
    let mut g: Vec<f64> = initial.values().iter().map(|v| v - kappa).collect();
    let mut r = split_residual(&grid.lap(&g), &g, kappa, h, c0);
    let mut rs = sup(&r);
    let mut history = Vec::new();
    let assemble = |kappa: f64, g: &[f64]| -> Vec<f64> { g.iter().map(|v| v + kappa).collect() };
    for it in 0..max_iter {
        let d: Vec<f64> = g.iter().zip(h).map(|(g, h)| (2.0 * (kappa + g)).exp() * h).collect();
        let (dk, dg, krylov_iterations) = bordered_newton_step(grid, &d, &r);
        let delta: Vec<f64> = dg.iter().map(|v| v + dk).collect();
        let step_sup = sup(&delta);
        if rs < tol && step_sup < step_tol {
            let f = assemble(kappa, &g);
            return Ok(VortexSolution { f: ScalarField::new(grid, f)?, residual_sup: rs, iterations: it, history });
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let tk = kappa + lambda * dk;
            let tg: Vec<f64> = g.iter().zip(&dg).map(|(g, d)| g + lambda * d).collect();
            let rt = split_residual(&grid.lap(&tg), &tg, tk, h, c0);
            let st = sup(&rt);
            if st < rs || (st <= rs && st < tol) {
                accepted = Some((tk, tg, rt, st));
                break;
            }
            lambda *= 0.5;
        }
        let Some((tk, tg, rt, st)) = accepted else {
            return Err(non_convergence(it, rs, &assemble(kappa, &g)));
        };
        kappa = tk;
        g = tg;
        r = rt;
        rs = st;
        let min_f = kappa + g.iter().cloned().fold(f64::INFINITY, f64::min);
        history.push(IterationRecord {
            iteration: it + 1,
            residual_sup: rs,
            step_sup: lambda * step_sup,
            damping: lambda,
            min_f,
            krylov_iterations,
        });
        if min_f < DIVERGENCE_FLOOR {
            return Err(non_convergence(it + 1, rs, &assemble(kappa, &g)));
        }
    }
    Err(non_convergence(max_iter, rs, &assemble(kappa, &g)))
}

/// Solves `(Δ + diag d) δ = −r` with `δ = δκ + δg`, `δg` weighted-mean-free.
/// The constant is eliminated through a scalar Schur complement, so both
/// right-hand sides handed to CG scale with `d` and `δg` keeps relative accuracy
/// even when `d` is at the roundoff level.
fn bordered_newton_step(grid: &SurfaceGrid, d: &[f64], r: &[f64]) -> (f64, Vec<f64>, usize) {
    let n = d.len();
    let w = grid.weights();
    let mean = |x: &[f64]| grid.integral(x) / VOLUME;
    let d_bar = mean(d);
    let r_bar = mean(r);
    let project = |x: &mut [f64]| {
        let m = mean(x);
        x.iter_mut().for_each(|v| *v -= m);
    };
    let solve = |mut b: Vec<f64>| -> (Vec<f64>, usize) {
        project(&mut b);
        let mut x = vec![0.0; n];
        let st = pcg(
            |x, out| {
                grid.apply_laplacian(x, out);
                let dx: Vec<f64> = x.iter().zip(d).map(|(x, d)| x * d).collect();
                let m = mean(&dx);
                for (o, v) in out.iter_mut().zip(&dx) {
                    *o += v - m;
                }
            },
            |b, out| {
                grid.shifted_inverse(d_bar, b, out);
                project(out);
            },
            w,
            &b,
            &mut x,
            1e-13,
            400,
        );
        (x, st.iterations)
    };
    let (y1, i1) = solve(r.iter().map(|v| -v).collect());
    let (y2, i2) = solve(d.iter().map(|v| -v).collect());
    let dy1: Vec<f64> = y1.iter().zip(d).map(|(y, d)| y * d).collect();
    let dy2: Vec<f64> = y2.iter().zip(d).map(|(y, d)| y * d).collect();
    let denom = d_bar + mean(&dy2);
    let dk = if denom.abs() > 0.0 { (-r_bar - mean(&dy1)) / denom } else { 0.0 };
    let dg = y1.iter().zip(&y2).map(|(a, b)| a + dk * b).collect();
    (dk, dg, i1 + i2)
}

fn non_convergence(iterations: usize, residual: f64, f: &[f64]) -> Error {
    let min_f = f.iter().cloned().fold(f64::INFINITY, f64::min);
    Error::NonConvergence { iterations, residual, min_f, diverged: min_f < DIVERGENCE_FLOOR, unresolved: None, certificate: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::higgs::{higgs_norm, Divisor, DivisorPoint};
    use crate::surface::{make_sphere_grid, make_torus_grid};
    use num_complex::Complex64;

    fn torus_case(n: usize) -> (SurfaceGrid, ScalarField) {
        let g = make_torus_grid(n, n, Complex64::new(0.0, 1.0)).unwrap();
        let d = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.5, 0.5)), 1)]).unwrap();
        let h = higgs_norm(&d, &g).unwrap();
        (g, h)
    }

    #[test]
    fn torus_vortex_converges_and_integrates_to_degree() {
        let (g, h) = torus_case(32);
        let sol = solve_vortex(&g, &h, 1, 6.0, 1e-10, 200).unwrap();
        assert!(sol.residual_sup < 1e-10);
        let p: Vec<f64> = sol.f.values().iter().zip(h.values()).map(|(f, h)| (2.0 * f).exp() * h).collect();
        let lhs = g.integral(&p.iter().map(|p| 6.0 - p).collect::<Vec<_>>());
        assert!((lhs - 4.0 * std::f64::consts::PI).abs() < 1e-8 * lhs);
        assert!(p.iter().all(|&p| p <= 6.0 * (1.0 + 1e-8)));
    }

    #[test]
    fn accepted_steps_never_increase_residual() {
        let (g, h) = torus_case(16);
        let f0 = ScalarField::constant(&g, 1.0);
        let sol = solve_vortex_from(&g, &h, 1, 6.0, 1e-10, 200, &f0).unwrap();
        let mut prev = f64::INFINITY;
        for rec in &sol.history {
            assert!(rec.residual_sup <= prev);
            prev = rec.residual_sup;
        }
    }

    #[test]
    fn inadmissible_tau_diverges() {
        let (g, h) = torus_case(16);
        match solve_vortex(&g, &h, 1, 2.0, 1e-8, 200) {
            Err(Error::NonConvergence { diverged, min_f, iterations, residual, .. }) => assert!(diverged && min_f < DIVERGENCE_FLOOR, "{iterations} {residual} {min_f}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sphere_antipodal_vortex_is_azimuthal() {
        let g = make_sphere_grid(24, 48).unwrap();
        let d = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.0, 0.0)), 1), (DivisorPoint::Infinity, 1)]).unwrap();
        let h = higgs_norm(&d, &g).unwrap();
        let sol = solve_vortex(&g, &h, 2, 6.0, 1e-10, 200).unwrap();
        assert!(g.max_row_variance(&sol.f).unwrap() < 1e-16);
    }

    #[test]
    fn rejects_bad_input() {
        let (g, h) = torus_case(8);
        assert!(matches!(solve_vortex(&g, &h, 1, 6.0, 0.0, 10), Err(Error::Precondition(_))));
        let other = make_torus_grid(16, 8, Complex64::new(0.0, 1.0)).unwrap();
        let f0 = ScalarField::constant(&other, 0.0);
        assert!(matches!(solve_vortex_from(&g, &h, 1, 6.0, 1e-8, 10, &f0), Err(Error::GridMismatch)));
    }

    #[test]
    fn log_lists_every_iteration() {
        let (g, h) = torus_case(16);
        let sol = solve_vortex(&g, &h, 1, 6.0, 1e-10, 200).unwrap();
        let mut buf = Vec::new();
        sol.write_log(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), sol.history.len() + 1);
    }
}
