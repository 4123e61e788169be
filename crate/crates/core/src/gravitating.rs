//! Gravitating vortices: the continuity path on a fixed background and the
//! Einstein–Bogomol'nyi equation on the sphere.
//!
//! The continuity path solves, for `t ∈ [0, α]`,
//!
//! ```text
//! Δ₀f + ½(P − τ) E = −N,    Δ₀v + E = 1,
//! P = e^{2f}|φ|²_{h₀},      E = exp(4tτf − 2tP − 2c_t v),   c_t = χ − 2tτN,
//! ```
//!
//! by Newton–GMRES with a constant-coefficient 2×2 block preconditioner. At
//! `t = 0` the system decouples into the vortex equation with `v = 0`.
//!
//! The Einstein–Bogomol'nyi solver handles `c = 0` on the sphere, where
//! `α = 1/(τN)` and the system collapses to
//! `Δ₀f + ½W(P − τ) = −N` with `W = 2π e^{4ατf − 2αP} / ∫e^{4ατf − 2αP} ω₀`.
//! It reaches `α` by a homotopy `α_s = sα` started from the vortex at `s = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FutakiCertificate, Result};
use crate::futaki::{futaki_closed_form, maximal_weight};
use crate::higgs::{classify_divisor, higgs_norm_sphere, hilbert_mumford_destabilized_exponent, Divisor, StabilityClass};
use crate::krylov::gmres;
use crate::surface::{ScalarField, SurfaceGrid, SurfaceKind, VOLUME};
use crate::vortex::{solve_vortex, DIVERGENCE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Coupling constant, or the continuity parameter `t` along a path.
    pub alpha: f64,
    pub tau: f64,
    pub n: u32,
    pub genus: u32,
}

impl ModelParams {
    pub fn new(alpha: f64, tau: f64, n: u32, genus: u32) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Precondition(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Precondition(format!("tau must be finite and > 0, got {tau}")));
        }
        if n == 0 {
            return Err(Error::Precondition("degree N must be at least 1".into()));
        }
        Ok(ModelParams { alpha, tau, n, genus })
    }

    /// Parameters with `c = 0` on the sphere: `α = 1/(τN)`.
    pub fn einstein_bogomolnyi(tau: f64, n: u32) -> Result<Self> {
        if n == 0 || !(tau > 0.0) {
            return Err(Error::Precondition("need N >= 1 and tau > 0".into()));
        }
        Self::new(1.0 / (tau * n as f64), tau, n, 0)
    }

    /// Parameters for the surface underlying `grid`.
    pub fn for_grid(grid: &SurfaceGrid, alpha: f64, tau: f64, n: u32) -> Result<Self> {
        Self::new(alpha, tau, n, grid.kind().genus())
    }

    pub fn chi(&self) -> f64 {
        2.0 - 2.0 * self.genus as f64
    }

    pub fn c(&self) -> f64 {
        topological_c(self)
    }

    /// Same parameters with the coupling replaced by `t`.
    pub fn at(&self, t: f64) -> Self {
        ModelParams { alpha: t, ..*self }
    }
}

/// `c = χ − 2ατN` for a surface of area 2π.
pub fn topological_c(p: &ModelParams) -> f64 {
    p.chi() - 2.0 * p.alpha * p.tau * p.n as f64
}

/// `α* = (2g − 2) / (2τ(τ/2 − N))`, for genus at least 2 and `0 < N < τ/2`.
pub fn alpha_star(genus: u32, tau: f64, n: u32) -> Result<f64> {
    if genus < 2 {
        return Err(Error::Precondition(format!("alpha* needs genus >= 2, got {genus}")));
    }
    if n == 0 || !((n as f64) < tau / 2.0) || !tau.is_finite() {
        return Err(Error::Precondition(format!("alpha* needs 0 < N < tau/2, got N = {n}, tau = {tau}")));
    }
    Ok((2.0 * genus as f64 - 2.0) / (2.0 * tau * (tau / 2.0 - n as f64)))
}

/// Monitored quantities along a path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateTrace {
    pub t: f64,
    /// Extremes of `y = e^{4tτf − 2cv}`.
    pub y_min: f64,
    pub y_max: f64,
    pub osc_f: f64,
    pub osc_v: f64,
    pub f_max: f64,
    pub v_min: f64,
    /// `∫(P − τ) E ω₀`, equal to `−4πN` on solutions.
    pub higgs_integral: f64,
    /// `∫E ω₀`, equal to `2π` on solutions.
    pub volume_integral: f64,
    /// `∫((2 + 4tτ) f − 2cv) ω₀`.
    pub jensen_first: f64,
    /// `∫(4tτf − 2cv) ω₀`.
    pub jensen_second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravSolveState {
    pub f: ScalarField,
    pub v: ScalarField,
    pub t: f64,
    /// Additive constant inside the exponent of `E`; zero on the continuity
    /// path, the volume normalization for Einstein–Bogomol'nyi states.
    pub gauge: f64,
    /// Sup-norms of the two discrete equations.
    pub residuals: (f64, f64),
    pub monitors: EstimateTrace,
    pub newton_iterations: usize,
}

impl GravSolveState {
    /// `1 − Δ₀v`, the density of `ω` with respect to `ω₀`.
    pub fn kahler_density(&self, grid: &SurfaceGrid) -> Result<ScalarField> {
        let lv = grid.laplacian(&self.v)?;
        lv.map(|x| 1.0 - x)
    }
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY })
}

fn check_fields(grid: &SurfaceGrid, fields: &[&ScalarField]) -> Result<()> {
    if fields.iter().any(|f| f.grid_id() != grid.id()) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn check_genus(grid: &SurfaceGrid, params: &ModelParams) -> Result<()> {
    if grid.kind().genus() != params.genus {
        return Err(Error::Precondition(format!(
            "parameters are for genus {} but the grid is a {}",
            params.genus,
            grid.kind().name()
        )));
    }
    Ok(())
}

/// The discrete continuity system at fixed `t`.
pub struct ReducedSystem<'a> {
    grid: &'a SurfaceGrid,
    h: &'a [f64],
    t: f64,
    tau: f64,
    n: f64,
    c: f64,
}

struct Coefficients {
    e: Vec<f64>,
    p: Vec<f64>,
    d11: Vec<f64>,
    d12: Vec<f64>,
    d21: Vec<f64>,
    d22: Vec<f64>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(grid: &'a SurfaceGrid, higgs: &'a ScalarField, params: &ModelParams) -> Result<Self> {
        check_fields(grid, &[higgs])?;
        check_genus(grid, params)?;
        Ok(ReducedSystem { grid, h: higgs.values(), t: params.alpha, tau: params.tau, n: params.n as f64, c: params.c() })
    }

    fn coefficients(&self, f: &[f64], v: &[f64]) -> Coefficients {
        let (t, tau, c) = (self.t, self.tau, self.c);
        let len = f.len();
        let mut k = Coefficients {
            e: Vec::with_capacity(len),
            p: Vec::with_capacity(len),
            d11: Vec::with_capacity(len),
            d12: Vec::with_capacity(len),
            d21: Vec::with_capacity(len),
            d22: Vec::with_capacity(len),
        };
        for i in 0..len {
            let p = (2.0 * f[i]).exp() * self.h[i];
            let e = (4.0 * t * tau * f[i] - 2.0 * t * p - 2.0 * c * v[i]).exp();
            k.p.push(p);
            k.e.push(e);
            k.d11.push(p * e - 2.0 * t * e * (p - tau) * (p - tau));
            k.d12.push(-c * (p - tau) * e);
            k.d21.push(4.0 * t * e * (tau - p));
            k.d22.push(-2.0 * c * e);
        }
        k
    }

    fn residual_raw(&self, f: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lf = self.grid.lap(f);
        let lv = self.grid.lap(v);
        let k = self.coefficients(f, v);
        let r1 = (0..f.len()).map(|i| lf[i] + 0.5 * (k.p[i] - self.tau) * k.e[i] + self.n).collect();
        let r2 = (0..f.len()).map(|i| lv[i] + k.e[i] - 1.0).collect();
        (r1, r2)
    }

    /// Pointwise residuals of both equations.
    pub fn residual(&self, f: &ScalarField, v: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        check_fields(self.grid, &[f, v])?;
        let (r1, r2) = self.residual_raw(f.values(), v.values());
        Ok((ScalarField::new(self.grid, r1)?, ScalarField::new(self.grid, r2)?))
    }

    /// Analytic linearization at `(f, v)` applied to `(δf, δv)`.
    pub fn apply_jacobian(
        &self,
        f: &ScalarField,
        v: &ScalarField,
        df: &ScalarField,
        dv: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)> {
        check_fields(self.grid, &[f, v, df, dv])?;
        let k = self.coefficients(f.values(), v.values());
        let len = f.values().len();
        let mut x = df.values().to_vec();
        x.extend_from_slice(dv.values());
        let mut out = vec![0.0; 2 * len];
        self.jacobian_raw(&k, &x, &mut out);
        let (a, b) = out.split_at(len);
        Ok((ScalarField::new(self.grid, a.to_vec())?, ScalarField::new(self.grid, b.to_vec())?))
    }

    fn jacobian_raw(&self, k: &Coefficients, x: &[f64], out: &mut [f64]) {
        let len = k.e.len();
        let (xf, xv) = x.split_at(len);
        let (o1, o2) = out.split_at_mut(len);
        self.grid.apply_laplacian(xf, o1);
        self.grid.apply_laplacian(xv, o2);
        for i in 0..len {
            o1[i] += k.d11[i] * xf[i] + k.d12[i] * xv[i];
            o2[i] += k.d21[i] * xf[i] + k.d22[i] * xv[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NewtonOutcome {
    iterations: usize,
    r1: f64,
    r2: f64,
}

fn newton_reduced(
    sys: &ReducedSystem,
    f: &mut Vec<f64>,
    v: &mut Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<NewtonOutcome, (usize, f64)> {
    let len = f.len();
    let grid = sys.grid;
    let mut w2 = grid.weights().to_vec();
    w2.extend_from_slice(grid.weights());
    let mean = |x: &[f64]| grid.integral(x) / VOLUME;
    let step_tol = tol.sqrt().min(1e-4);
    let (mut r1, mut r2) = sys.residual_raw(f, v);
    let mut rs = sup(&r1).max(sup(&r2));
    for it in 0..max_iter {
        if !rs.is_finite() {
            return Err((it, rs));
        }
        let k = sys.coefficients(f, v);
        let a = [[mean(&k.d11), mean(&k.d12)], [mean(&k.d21), mean(&k.d22)]];
        let mut rhs: Vec<f64> = r1.iter().map(|x| -x).collect();
        rhs.extend(r2.iter().map(|x| -x));
        let mut delta = vec![0.0; 2 * len];
        gmres(
            |x, out| sys.jacobian_raw(&k, x, out),
            |b, out| grid.block_inverse(a, b, out),
            &w2,
            &rhs,
            &mut delta,
            1e-10,
            60,
            600,
        );
        let step = sup(&delta);
        if rs < tol && step < step_tol {
            return Ok(NewtonOutcome { iterations: it, r1: sup(&r1), r2: sup(&r2) });
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let tf: Vec<f64> = f.iter().zip(&delta[..len]).map(|(a, b)| a + lambda * b).collect();
            let tv: Vec<f64> = v.iter().zip(&delta[len..]).map(|(a, b)| a + lambda * b).collect();
            let (t1, t2) = sys.residual_raw(&tf, &tv);
            let ts = sup(&t1).max(sup(&t2));
            if ts < rs || (ts <= rs && ts < tol) {
                *f = tf;
                *v = tv;
                r1 = t1;
                r2 = t2;
                rs = ts;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err((it, rs));
        }
    }
    Err((max_iter, rs))
}

/// Step control for [`run_continuity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Sup-norm tolerance on both equations for accepted states.
    pub tol: f64,
    /// First step; defaults to a quarter of the target.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub max_newton: usize,
    pub vortex_max_iter: usize,
    /// Accepted states after which the path gives up as stalled.
    pub max_states: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { tol: 1e-8, initial_step: None, min_step: 1e-6, max_newton: 30, vortex_max_iter: 200, max_states: 5000 }
    }
}

/// Accepted states of a continuity run and, if the path stopped early, why.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRun {
    pub states: Vec<GravSolveState>,
    pub error: Option<Error>,
    pub rejected_steps: usize,
}

impl ContinuityRun {
    pub fn into_result(self) -> Result<Vec<GravSolveState>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.states),
        }
    }
}

/// Continuity method from the decoupled `t = 0` to `params.alpha`.
pub fn solve_continuity(grid: &SurfaceGrid, higgs: &ScalarField, params: &ModelParams, tol: f64) -> Result<Vec<GravSolveState>> {
    let opts = ContinuationOptions { tol, ..Default::default() };
    run_continuity(grid, higgs, params, &opts).into_result()
}

pub fn run_continuity(grid: &SurfaceGrid, higgs: &ScalarField, params: &ModelParams, opts: &ContinuationOptions) -> ContinuityRun {
    let mut run = ContinuityRun { states: Vec::new(), error: None, rejected_steps: 0 };
    if let Err(e) = check_fields(grid, &[higgs]).and_then(|_| check_genus(grid, params)) {
        run.error = Some(e);
        return run;
    }
    if !(opts.tol > 0.0) || !(opts.min_step > 0.0) {
        run.error = Some(Error::Precondition("tolerance and minimum step must be positive".into()));
        return run;
    }
    let target = params.alpha;
    let vortex = match solve_vortex(grid, higgs, params.n, params.tau, opts.tol, opts.vortex_max_iter) {
        Ok(s) => s,
        Err(e) => {
            run.error = Some(e);
            return run;
        }
    };
    let zero = ScalarField::constant(grid, 0.0);
    match make_state(grid, higgs, &params.at(0.0), vortex.f, zero, 0.0, vortex.iterations) {
        Ok(s) => run.states.push(s),
        Err(e) => {
            run.error = Some(e);
            return run;
        }
    }
    let mut t = 0.0;
    let mut dt = opts.initial_step.unwrap_or(target / 4.0).min(target).max(opts.min_step);
    let mut prev_dt = dt;
    let mut streak = 0;
    let mut kahler_failure: Option<f64> = None;
    while t < target {
        if run.states.len() > opts.max_states {
            run.error = Some(Error::StepUnderflow { last_t: t, min_step: opts.min_step });
            return run;
        }
        let step = dt.min(target - t);
        let tn = if target - t <= step * (1.0 + 1e-12) { target } else { t + step };
        let p_t = params.at(tn);
        let sys = match ReducedSystem::new(grid, higgs, &p_t) {
            Ok(s) => s,
            Err(e) => {
                run.error = Some(e);
                return run;
            }
        };
        let (mut f, mut v) = predict(&run.states, step, prev_dt);
        normalize_volume(grid, higgs, &p_t, &f, &mut v);
        let outcome = newton_reduced(&sys, &mut f, &mut v, opts.tol, opts.max_newton);
        let accepted = match outcome {
            Ok(o) => {
                let w_min = grid.lap(&v).iter().map(|x| 1.0 - x).fold(f64::INFINITY, f64::min);
                if w_min > 0.0 {
                    let fs = ScalarField::from_raw(grid, f);
                    let vs = ScalarField::from_raw(grid, v);
                    match make_state(grid, higgs, &p_t, fs, vs, 0.0, o.iterations) {
                        Ok(mut s) => {
                            s.residuals = (o.r1, o.r2);
                            run.states.push(s);
                            true
                        }
                        Err(_) => false,
                    }
                } else {
                    kahler_failure = Some(w_min);
                    false
                }
            }
            Err(_) => false,
        };
        if accepted {
            t = tn;
            prev_dt = step;
            streak += 1;
            if streak >= 3 {
                dt = step * 2.0;
                streak = 0;
            } else {
                dt = step;
            }
        } else {
            run.rejected_steps += 1;
            streak = 0;
            dt = step / 2.0;
            if dt < opts.min_step {
                run.error = Some(match kahler_failure {
                    Some(min_w) => Error::KahlerPositivityLost { t: tn, min_w },
                    None => Error::StepUnderflow { last_t: t, min_step: opts.min_step },
                });
                return run;
            }
        }
    }
    run
}

/// Secant predictor from the last two states (constant from the first).
fn predict(states: &[GravSolveState], step: f64, prev_dt: f64) -> (Vec<f64>, Vec<f64>) {
    let last = &states[states.len() - 1];
    if states.len() < 2 || last.t == 0.0 {
        return (last.f.values().to_vec(), last.v.values().to_vec());
    }
    let before = &states[states.len() - 2];
    let r = step / prev_dt.max(1e-300);
    let ext = |a: &ScalarField, b: &ScalarField| -> Vec<f64> {
        a.values().iter().zip(b.values()).map(|(x, y)| x + r * (x - y)).collect()
    };
    (ext(&last.f, &before.f), ext(&last.v, &before.v))
}

/// Shifts `v` by the constant that makes `∫E ω₀ = 2π` (no-op when `c = 0`).
fn normalize_volume(grid: &SurfaceGrid, higgs: &ScalarField, p: &ModelParams, f: &[f64], v: &mut [f64]) {
    let c = p.c();
    if c.abs() < 1e-14 {
        return;
    }
    let e: Vec<f64> = f
        .iter()
        .zip(v.iter())
        .zip(higgs.values())
        .map(|((f, v), h)| {
            let pp = (2.0 * f).exp() * h;
            (4.0 * p.alpha * p.tau * f - 2.0 * p.alpha * pp - 2.0 * c * v).exp()
        })
        .collect();
    let integral = grid.integral(&e);
    if integral.is_finite() && integral > 0.0 {
        let shift = (integral / VOLUME).ln() / (2.0 * c);
        v.iter_mut().for_each(|x| *x += shift);
    }
}

fn make_state(
    grid: &SurfaceGrid,
    higgs: &ScalarField,
    params: &ModelParams,
    f: ScalarField,
    v: ScalarField,
    gauge: f64,
    newton_iterations: usize,
) -> Result<GravSolveState> {
    let mut state = GravSolveState {
        f,
        v,
        t: params.alpha,
        gauge,
        residuals: (0.0, 0.0),
        monitors: EstimateTrace {
            t: params.alpha,
            y_min: 0.0,
            y_max: 0.0,
            osc_f: 0.0,
            osc_v: 0.0,
            f_max: 0.0,
            v_min: 0.0,
            higgs_integral: 0.0,
            volume_integral: 0.0,
            jensen_first: 0.0,
            jensen_second: 0.0,
        },
        newton_iterations,
    };
    if gauge == 0.0 {
        let sys = ReducedSystem::new(grid, higgs, params)?;
        let (r1, r2) = sys.residual_raw(state.f.values(), state.v.values());
        state.residuals = (sup(&r1), sup(&r2));
    }
    state.monitors = monitor_estimates(&state, params, grid, higgs)?;
    Ok(state)
}

/// Estimate monitors of a state.
pub fn monitor_estimates(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField) -> Result<EstimateTrace> {
    check_fields(grid, &[&state.f, &state.v, higgs])?;
    let (t, tau, c) = (params.alpha, params.tau, params.c());
    let f = state.f.values();
    let v = state.v.values();
    let h = higgs.values();
    let len = f.len();
    let mut y_min = f64::INFINITY;
    let mut y_max: f64 = 0.0;
    let mut higgs_density = Vec::with_capacity(len);
    let mut e_density = Vec::with_capacity(len);
    let mut first = Vec::with_capacity(len);
    let mut second = Vec::with_capacity(len);
    for i in 0..len {
        let ly = 4.0 * t * tau * f[i] - 2.0 * c * v[i];
        let y = ly.exp();
        y_min = y_min.min(y);
        y_max = y_max.max(y);
        let p = (2.0 * f[i]).exp() * h[i];
        let e = (ly - 2.0 * t * p + state.gauge).exp();
        higgs_density.push((p - tau) * e);
        e_density.push(e);
        first.push((2.0 + 4.0 * t * tau) * f[i] - 2.0 * c * v[i]);
        second.push(ly);
    }
    Ok(EstimateTrace {
        t,
        y_min,
        y_max,
        osc_f: state.f.max() - state.f.min(),
        osc_v: state.v.max() - state.v.min(),
        f_max: state.f.max(),
        v_min: state.v.min(),
        higgs_integral: grid.integral(&higgs_density),
        volume_integral: grid.integral(&e_density),
        jensen_first: grid.integral(&first),
        jensen_second: grid.integral(&second),
    })
}

/// Monitors that grew strictly over the last `window` states by more than
/// `factor` overall. Flags only; never an error.
pub fn flag_blowups(traces: &[EstimateTrace], window: usize, factor: f64) -> Vec<String> {
    let mut flags = Vec::new();
    if window < 2 || traces.len() < window {
        return flags;
    }
    let tail = &traces[traces.len() - window..];
    let series: [(&str, Vec<f64>); 4] = [
        ("osc_f", tail.iter().map(|m| m.osc_f).collect()),
        ("osc_v", tail.iter().map(|m| m.osc_v).collect()),
        ("y_max", tail.iter().map(|m| m.y_max).collect()),
        ("1/y_min", tail.iter().map(|m| 1.0 / m.y_min).collect()),
    ];
    for (name, s) in series {
        let increasing = s.windows(2).all(|w| w[1] > w[0]);
        if increasing && s[s.len() - 1] > factor * s[0].abs().max(1e-300) {
            flags.push(format!("{name} grew monotonically from {:.3e} to {:.3e}", s[0], s[s.len() - 1]));
        }
    }
    flags
}

/// Columnar path log: one row per state.
pub fn write_path_log<W: Write>(states: &[GravSolveState], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "# t r1_sup r2_sup newton y_min y_max osc_f osc_v higgs_integral volume_integral jensen_first jensen_second"
    )?;
    for s in states {
        let m = &s.monitors;
        writeln!(
            w,
            "{:.12e} {:.6e} {:.6e} {} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e}",
            s.t,
            s.residuals.0,
            s.residuals.1,
            s.newton_iterations,
            m.y_min,
            m.y_max,
            m.osc_f,
            m.osc_v,
            m.higgs_integral,
            m.volume_integral,
            m.jensen_first,
            m.jensen_second
        )?;
    }
    Ok(())
}

/// Geometric quantities of a state in the moving metric `ω = (1 − Δ₀v) ω₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingMetric {
    /// `1 − Δ₀v`.
    pub density: Vec<f64>,
    /// `|φ|²_h`.
    pub higgs: Vec<f64>,
    /// `iΛ_ω F_h = (N + Δ₀f) / (1 − Δ₀v)`.
    pub curvature_contraction: Vec<f64>,
    /// Scalar curvature `S_ω` (equal to the Gaussian curvature).
    pub scalar_curvature: Vec<f64>,
    /// `Δ_ω |φ|²_h`.
    pub laplacian_higgs: Vec<f64>,
}

pub fn moving_metric(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField) -> Result<MovingMetric> {
    check_fields(grid, &[&state.f, &state.v, higgs])?;
    check_genus(grid, params)?;
    let f = state.f.values();
    let lv = grid.lap_resolved(state.v.values());
    let density: Vec<f64> = lv.iter().map(|x| 1.0 - x).collect();
    if let Some(k) = density.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::KahlerPositivityLost { t: state.t, min_w: density[k] });
    }
    let p: Vec<f64> = f.iter().zip(higgs.values()).map(|(f, h)| (2.0 * f).exp() * h).collect();
    let lf = grid.lap_resolved(f);
    let lnw: Vec<f64> = density.iter().map(|w| w.ln()).collect();
    let llnw = grid.lap_resolved(&lnw);
    let lp = grid.lap_resolved(&p);
    let k0 = grid.kind().background_curvature();
    let n = params.n as f64;
    let len = f.len();
    Ok(MovingMetric {
        curvature_contraction: (0..len).map(|i| (n + lf[i]) / density[i]).collect(),
        scalar_curvature: (0..len).map(|i| (k0 + 0.5 * llnw[i]) / density[i]).collect(),
        laplacian_higgs: (0..len).map(|i| lp[i] / density[i]).collect(),
        higgs: p,
        density,
    })
}

/// Sup-norms of `iΛ_ωF_h + ½(|φ|²_h − τ)` and `S_ω + α(Δ_ω + τ)(|φ|²_h − τ) − c`.
pub fn residuals_gravitating(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField) -> Result<(f64, f64)> {
    let m = moving_metric(state, params, grid, higgs)?;
    let (alpha, tau, c) = (params.alpha, params.tau, params.c());
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    for i in 0..m.density.len() {
        r1 = r1.max((m.curvature_contraction[i] + 0.5 * (m.higgs[i] - tau)).abs());
        let second = m.scalar_curvature[i] + alpha * (m.laplacian_higgs[i] + tau * (m.higgs[i] - tau)) - c;
        r2 = r2.max(second.abs());
    }
    Ok((r1, r2))
}

/// Sup-norm of `S_ω + αΔ_ω|φ|²_h − 2ατ iΛ_ωF_h − c`, the metric equation in
/// its Kähler–Einstein form.
pub fn kahler_einstein_residual(state: &GravSolveState, params: &ModelParams, grid: &SurfaceGrid, higgs: &ScalarField) -> Result<f64> {
    let m = moving_metric(state, params, grid, higgs)?;
    let (alpha, tau, c) = (params.alpha, params.tau, params.c());
    Ok((0..m.density.len())
        .map(|i| (m.scalar_curvature[i] + alpha * m.laplacian_higgs[i] - 2.0 * alpha * tau * m.curvature_contraction[i] - c).abs())
        .fold(0.0, f64::max))
}

/// Options for the Einstein–Bogomol'nyi homotopy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EinsteinBogomolnyiOptions {
    pub tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_newton: usize,
    /// Total Newton iterations over the whole homotopy.
    pub budget: usize,
}

impl Default for EinsteinBogomolnyiOptions {
    fn default() -> Self {
        EinsteinBogomolnyiOptions { tol: 1e-10, initial_step: 0.25, min_step: 1e-6, max_newton: 40, budget: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EinsteinBogomolnyiRun {
    /// Accepted homotopy states; `t` is the coupling `sα` reached.
    pub path: Vec<GravSolveState>,
    pub result: Result<GravSolveState>,
}

struct EbSystem<'a> {
    grid: &'a SurfaceGrid,
    h: &'a [f64],
    alpha: f64,
    tau: f64,
    n: f64,
}

struct EbEval {
    r: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
    gauge: f64,
}

impl EbSystem<'_> {
    fn eval(&self, f: &[f64]) -> EbEval {
        let p: Vec<f64> = f.iter().zip(self.h).map(|(f, h)| (2.0 * f).exp() * h).collect();
        let g: Vec<f64> = f.iter().zip(&p).map(|(f, p)| 4.0 * self.alpha * self.tau * f - 2.0 * self.alpha * p).collect();
        let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let eg: Vec<f64> = g.iter().map(|x| (x - gmax).exp()).collect();
        let integral = self.grid.integral(&eg);
        let w: Vec<f64> = eg.iter().map(|x| x * VOLUME / integral).collect();
        let gauge = (VOLUME / integral).ln() - gmax;
        let lf = self.grid.lap(f);
        let r = (0..f.len()).map(|i| lf[i] + 0.5 * w[i] * (p[i] - self.tau) + self.n).collect();
        EbEval { r, w, p, gauge }
    }
}

fn newton_eb(sys: &EbSystem, f: &mut Vec<f64>, tol: f64, max_iter: usize) -> std::result::Result<(usize, f64, f64), (usize, f64)> {
    let grid = sys.grid;
    let wq = grid.weights();
    let step_tol = tol.sqrt().min(1e-4);
    let mut ev = sys.eval(f);
    let mut rs = sup(&ev.r);
    for it in 0..max_iter {
        if !rs.is_finite() {
            return Err((it, rs));
        }
        let (a, tau) = (sys.alpha, sys.tau);
        let d: Vec<f64> = (0..f.len()).map(|i| ev.w[i] * (ev.p[i] - 2.0 * a * (ev.p[i] - tau).powi(2))).collect();
        let q: Vec<f64> = (0..f.len()).map(|i| 0.5 * (ev.p[i] - tau) * ev.w[i]).collect();
        let s: Vec<f64> = (0..f.len()).map(|i| 4.0 * a * (tau - ev.p[i]) * ev.w[i] * wq[i]).collect();
        let shift = (grid.integral(&d) / VOLUME).max(0.5);
        let rhs: Vec<f64> = ev.r.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; f.len()];
        gmres(
            |x, out| {
                grid.apply_laplacian(x, out);
                let proj: f64 = s.iter().zip(x).map(|(s, x)| s * x).sum::<f64>() / VOLUME;
                for i in 0..x.len() {
                    out[i] += d[i] * x[i] - q[i] * proj;
                }
            },
            |b, out| grid.shifted_inverse(shift, b, out),
            wq,
            &rhs,
            &mut delta,
            1e-10,
            60,
            600,
        );
        let step = sup(&delta);
        if rs < tol && step < step_tol {
            return Ok((it, rs, ev.gauge));
        }
        if step < 1e-13 * (1.0 + sup(f)) {
            // Newton has hit the rounding floor above the tolerance.
            return Err((it, rs));
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let tf: Vec<f64> = f.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect();
            let te = sys.eval(&tf);
            let ts = sup(&te.r);
            if ts < rs || (ts <= rs && ts < tol) {
                *f = tf;
                ev = te;
                rs = ts;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // At a degenerate solution (a continuous family, e.g. two antipodal
            // points) the Newton step need not shrink; the residual floor decides.
            return if rs < tol { Ok((it, rs, ev.gauge)) } else { Err((it, rs)) };
        }
        if f.iter().cloned().fold(f64::INFINITY, f64::min) < DIVERGENCE_FLOOR {
            return Err((it, rs));
        }
    }
    Err((max_iter, rs))
}

/// Largest admissible spectral tail of the area density `W` above degree
/// `2n_θ/3`. Discrete solutions that concentrate the area into a ring of
/// cells next to a pole exceed it at every resolution; resolved ones fall
/// below it rapidly under refinement.
pub const RESOLUTION_TAIL: f64 = 1e-2;

/// Futaki certificate for a non-polystable divisor: the limit configuration
/// puts the dominant point at infinity, `ℓ = N − n_max`.
pub fn futaki_certificate(d: &Divisor, tau: f64) -> Option<FutakiCertificate> {
    let class = classify_divisor(d);
    if class != StabilityClass::Unstable {
        return None;
    }
    let n = d.degree();
    let top = hilbert_mumford_destabilized_exponent(d);
    let alpha = 1.0 / (tau * n as f64);
    let futaki = futaki_closed_form(n, n - top, alpha, tau).ok()?;
    Some(FutakiCertificate { class, exponent: top, futaki, maximal_weight: maximal_weight(n, top, alpha, tau) })
}

/// Solves the Einstein–Bogomol'nyi equation on the sphere.
pub fn solve_einstein_bogomolnyi_sphere(d: &Divisor, tau: f64, tol: f64, grid: &SurfaceGrid) -> Result<GravSolveState> {
    let opts = EinsteinBogomolnyiOptions { tol, ..Default::default() };
    run_einstein_bogomolnyi_sphere(d, tau, grid, &opts).result
}

pub fn run_einstein_bogomolnyi_sphere(d: &Divisor, tau: f64, grid: &SurfaceGrid, opts: &EinsteinBogomolnyiOptions) -> EinsteinBogomolnyiRun {
    let mut path = Vec::new();
    let result = eb_homotopy(d, tau, grid, opts, &mut path);
    EinsteinBogomolnyiRun { path, result }
}

fn eb_homotopy(
    d: &Divisor,
    tau: f64,
    grid: &SurfaceGrid,
    opts: &EinsteinBogomolnyiOptions,
    path: &mut Vec<GravSolveState>,
) -> Result<GravSolveState> {
    if grid.kind() != SurfaceKind::Sphere {
        return Err(Error::GridKind { expected: "sphere" });
    }
    let params = ModelParams::einstein_bogomolnyi(tau, d.degree())?;
    let higgs = higgs_norm_sphere(d, grid)?;
    let certificate = || futaki_certificate(d, tau).map(Box::new);
    let mut unresolved: Option<f64> = None;
    let fail = |iterations: usize, residual: f64, f: &[f64], unresolved: Option<f64>| Error::NonConvergence {
        iterations,
        residual,
        min_f: f.iter().cloned().fold(f64::INFINITY, f64::min),
        diverged: f.iter().cloned().fold(f64::INFINITY, f64::min) < DIVERGENCE_FLOOR,
        unresolved,
        certificate: certificate(),
    };
    let vortex = match solve_vortex(grid, &higgs, params.n, tau, opts.tol, 200) {
        Ok(v) => v,
        Err(Error::NonConvergence { iterations, residual, min_f, diverged, unresolved, .. }) => {
            return Err(Error::NonConvergence { iterations, residual, min_f, diverged, unresolved, certificate: certificate() })
        }
        Err(e) => return Err(e),
    };
    let mut used = vortex.iterations;
    let mut f = vortex.f.values().to_vec();
    let mut s = 0.0;
    let mut ds = opts.initial_step;
    let mut streak = 0;
    let mut last_residual = vortex.residual_sup;
    path.push(eb_state(grid, &higgs, &params, 0.0, &f, vortex.iterations)?);
    while s < 1.0 {
        let sn = (s + ds).min(1.0);
        let sys = EbSystem { grid, h: higgs.values(), alpha: sn * params.alpha, tau, n: params.n as f64 };
        let mut trial = f.clone();
        let budget_left = opts.budget.saturating_sub(used);
        if budget_left == 0 {
            return Err(fail(used, last_residual, &f, unresolved));
        }
        let outcome = newton_eb(&sys, &mut trial, opts.tol, opts.max_newton.min(budget_left));
        let accepted = match outcome {
            Ok((its, r, _)) => {
                used += its.max(1);
                last_residual = r;
                let w = ScalarField::new(grid, sys.eval(&trial).w)?;
                let tail = grid.spectral_tail(&w)?;
                if tail <= RESOLUTION_TAIL {
                    s = sn;
                    f = trial.clone();
                    path.push(eb_state(grid, &higgs, &params, s, &f, its)?);
                    true
                } else {
                    unresolved = Some(tail);
                    false
                }
            }
            Err((its, r)) => {
                used += its.max(1);
                last_residual = r;
                false
            }
        };
        if accepted {
            streak += 1;
            if streak >= 3 {
                ds *= 2.0;
                streak = 0;
            }
        } else {
            streak = 0;
            ds /= 2.0;
            if ds < opts.min_step {
                return Err(fail(used, last_residual, &trial, unresolved));
            }
        }
    }
    Ok(path.last().cloned().expect("homotopy path holds the final state"))
}

fn eb_state(
    grid: &SurfaceGrid,
    higgs: &ScalarField,
    params: &ModelParams,
    s: f64,
    f: &[f64],
    iterations: usize,
) -> Result<GravSolveState> {
    let alpha = s * params.alpha;
    let sys = EbSystem { grid, h: higgs.values(), alpha, tau: params.tau, n: params.n as f64 };
    let ev = sys.eval(f);
    let rhs: Vec<f64> = ev.w.iter().map(|w| 1.0 - w).collect();
    let mut v = vec![0.0; f.len()];
    grid.shifted_inverse(0.0, &rhs, &mut v);
    let lv = grid.lap(&v);
    let r2 = sup(&lv.iter().zip(&ev.w).map(|(l, w)| l + w - 1.0).collect::<Vec<_>>());
    let p_s = ModelParams { alpha, ..*params };
    let mut state = make_state(grid, higgs, &p_s, ScalarField::new(grid, f.to_vec())?, ScalarField::new(grid, v)?, ev.gauge, iterations)?;
    state.residuals = (sup(&ev.r), r2);
    Ok(state)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::higgs::{higgs_norm, DivisorPoint};
    use crate::surface::{make_sphere_grid, make_torus_grid, smooth_random_field};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn torus_case(n: usize) -> (SurfaceGrid, ScalarField) {
        let g = make_torus_grid(n, n, Complex64::new(0.0, 1.0)).unwrap();
        let d = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.5, 0.5)), 1)]).unwrap();
        let h = higgs_norm(&d, &g).unwrap();
        (g, h)
    }

    fn antipodal() -> Divisor {
        Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.0, 0.0)), 1), (DivisorPoint::Infinity, 1)]).unwrap()
    }

    #[test]
    fn alpha_star_values_and_preconditions() {
        assert_eq!(alpha_star(2, 6.0, 2).unwrap(), 1.0 / 6.0);
        assert_eq!(alpha_star(3, 8.0, 3).unwrap(), 0.25);
        assert!(alpha_star(2, 4.0, 2).is_err());
        assert!(alpha_star(1, 6.0, 1).is_err());
    }

    #[test]
    fn topological_constant_cases() {
        let p = ModelParams::new(0.05, 6.0, 1, 1).unwrap();
        assert!((p.c() + 0.6).abs() < 1e-15);
        assert_eq!(ModelParams::einstein_bogomolnyi(6.0, 2).unwrap().c(), 0.0);
        assert_eq!(ModelParams::new(0.0, 6.0, 3, 0).unwrap().c(), 2.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (g, h) = torus_case(16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ModelParams::new(0.05, 6.0, 1, 1).unwrap();
        let sys = ReducedSystem::new(&g, &h, &params).unwrap();
        for _ in 0..5 {
            let f = smooth_random_field(&g, &mut rng, 0.5);
            let v = smooth_random_field(&g, &mut rng, 0.5);
            let df = smooth_random_field(&g, &mut rng, 1.0);
            let dv = smooth_random_field(&g, &mut rng, 1.0);
            let (j1, j2) = sys.apply_jacobian(&f, &v, &df, &dv).unwrap();
            let eps = 1e-5;
            let shift = |s: f64| {
                let fs = f.zip_with(&df, |a, b| a + s * b).unwrap();
                let vs = v.zip_with(&dv, |a, b| a + s * b).unwrap();
                sys.residual(&fs, &vs).unwrap()
            };
            let (p1, p2) = shift(eps);
            let (m1, m2) = shift(-eps);
            let mut err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..g.len() {
                let fd1 = (p1.values()[i] - m1.values()[i]) / (2.0 * eps);
                let fd2 = (p2.values()[i] - m2.values()[i]) / (2.0 * eps);
                err = err.max((fd1 - j1.values()[i]).abs()).max((fd2 - j2.values()[i]).abs());
                scale = scale.max(j1.values()[i].abs()).max(j2.values()[i].abs());
            }
            assert!(err < 1e-5 * scale, "{err} vs {scale}");
        }
    }

    #[test]
    fn zero_target_returns_the_vortex_with_flat_potential() {
        let (g, h) = torus_case(16);
        let params = ModelParams::new(0.0, 6.0, 1, 1).unwrap();
        let states = solve_continuity(&g, &h, &params, 1e-9).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].v.sup_norm(), 0.0);
        assert!((states[0].monitors.y_min - 1.0).abs() < 1e-15 && (states[0].monitors.y_max - 1.0).abs() < 1e-15);
    }

    #[test]
    fn torus_continuity_reaches_target_with_identities() {
        let (g, h) = torus_case(24);
        let params = ModelParams::new(0.05, 6.0, 1, 1).unwrap();
        let states = solve_continuity(&g, &h, &params, 1e-9).unwrap();
        let last = states.last().unwrap();
        assert_eq!(last.t, 0.05);
        for s in &states {
            let p = params.at(s.t);
            assert!(s.residuals.0 < 1e-9 && s.residuals.1 < 1e-9);
            assert!(s.kahler_density(&g).unwrap().min() > 0.0);
            let m = &s.monitors;
            assert!((m.volume_integral - 2.0 * PI).abs() < 1e-8 * 2.0 * PI, "{m:?}");
            assert!((m.higgs_integral + 4.0 * PI).abs() < 1e-8 * 4.0 * PI, "{m:?}");
            let (r1, r2) = residuals_gravitating(s, &p, &g, &h).unwrap();
            assert!(r1 < 1e-7 && r2 < 1e-6, "{r1} {r2} at t = {}", s.t);
            assert!(kahler_einstein_residual(s, &p, &g, &h).unwrap() < 1e-6);
        }
        let mut buf = Vec::new();
        write_path_log(&states, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), states.len() + 1);
    }

    #[test]
    fn perturbing_v_breaks_the_metric_equation() {
        let (g, h) = torus_case(16);
        let params = ModelParams::new(0.02, 6.0, 1, 1).unwrap();
        let mut s = solve_continuity(&g, &h, &params, 1e-9).unwrap().pop().unwrap();
        let before = residuals_gravitating(&s, &params, &g, &h).unwrap().1;
        s.v = s.v.zip_with(&ScalarField::from_fn(&g, |p| (2.0 * PI * p.c1).sin()).unwrap(), |a, b| a + 0.1 * b).unwrap();
        let after = residuals_gravitating(&s, &params, &g, &h).unwrap().1;
        assert!(after > 1e-2 && after > 100.0 * before, "{before} -> {after}");
    }

    #[test]
    fn continuity_rejects_mismatched_genus() {
        let (g, h) = torus_case(16);
        let params = ModelParams::new(0.05, 6.0, 1, 0).unwrap();
        assert!(matches!(solve_continuity(&g, &h, &params, 1e-9), Err(Error::Precondition(_))));
    }

    #[test]
    fn antipodal_einstein_bogomolnyi_is_azimuthal() {
        let g = make_sphere_grid(32, 64).unwrap();
        let s = solve_einstein_bogomolnyi_sphere(&antipodal(), 6.0, 1e-10, &g).unwrap();
        assert!(s.residuals.0 < 1e-10 && s.residuals.1 < 1e-9, "{:?}", s.residuals);
        assert!(g.max_row_variance(&s.f).unwrap() < 1e-6);
        let params = ModelParams::einstein_bogomolnyi(6.0, 2).unwrap();
        let h = higgs_norm_sphere(&antipodal(), &g).unwrap();
        let (r1, r2) = residuals_gravitating(&s, &params, &g, &h).unwrap();
        assert!(r1 < 1e-8 && r2 < 1e-6, "{r1} {r2}");
    }

    #[test]
    fn coincident_points_fail_with_certificate() {
        let g = make_sphere_grid(24, 48).unwrap();
        let d = Divisor::from_pairs(&[(DivisorPoint::Finite(Complex64::new(0.0, 0.0)), 2)]).unwrap();
        match solve_einstein_bogomolnyi_sphere(&d, 6.0, 1e-10, &g) {
            Err(Error::NonConvergence { certificate: Some(c), .. }) => {
                assert_eq!(c.class, StabilityClass::Unstable);
                assert!(c.futaki.norm() > 1.0);
                assert!(c.maximal_weight < 0.0);
            }
            other => panic!("expected certified failure, got {other:?}"),
        }
    }

    #[test]
    fn torus_grid_rejected_for_einstein_bogomolnyi() {
        let (g, _) = torus_case(16);
        assert!(matches!(solve_einstein_bogomolnyi_sphere(&antipodal(), 6.0, 1e-8, &g), Err(Error::GridKind { .. })));
    }

    #[test]
    fn blowup_flags_need_monotone_growth() {
        let base = EstimateTrace {
            t: 0.0,
            y_min: 1.0,
            y_max: 1.0,
            osc_f: 1.0,
            osc_v: 0.0,
            f_max: 0.0,
            v_min: 0.0,
            higgs_integral: 0.0,
            volume_integral: 0.0,
            jensen_first: 0.0,
            jensen_second: 0.0,
        };
        let growing: Vec<_> = (0..5).map(|k| EstimateTrace { osc_f: 10f64.powi(k), ..base }).collect();
        assert_eq!(flag_blowups(&growing, 5, 100.0).len(), 1);
        let flat: Vec<_> = (0..5).map(|_| base).collect();
        assert!(flag_blowups(&flat, 5, 100.0).is_empty());
    }
}
