//! Command implementations. Each returns an exit code and a text report and
//! writes its artifacts under the output directory.

use std::fmt::Write as _;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use gravvortex::diagnostics::{audit_state_with, AuditOptions, AuditReport};
use gravvortex::error::Error;
use gravvortex::futaki::{futaki_closed_form, futaki_quadrature, maximal_weight};
use gravvortex::gravitating::{
    flag_blowups, monitor_estimates, run_continuity, run_einstein_bogomolnyi_sphere, write_path_log, ContinuationOptions,
    EinsteinBogomolnyiOptions, GravSolveState, ModelParams,
};
use gravvortex::higgs::{bradlow_admissible, classify_divisor, higgs_norm, hilbert_mumford_destabilized_exponent, Divisor, StabilityClass};
use gravvortex::surface::{ScalarField, SurfaceGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig, SolveMode, SurfaceKindSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_STEP_UNDERFLOW: i32 = 4;
pub const EXIT_AUDIT_FAILED: i32 = 5;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub report: String,
}

impl Outcome {
    fn new(code: i32, report: String) -> Self {
        Outcome { code, report }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        Error::StepUnderflow { .. } | Error::KahlerPositivityLost { .. } => EXIT_STEP_UNDERFLOW,
        _ => EXIT_CONFIG,
    }
}

/// Applies overrides, validates, runs the command and writes the manifest.
pub fn execute(mut config: RunConfig, overrides: &Overrides) -> Outcome {
    if let Some(out) = &overrides.out {
        config.out = out.clone();
    }
    if let Some(tol) = overrides.tol {
        config.params.tol = tol;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Err(e) = config.validate() {
        return Outcome::new(EXIT_CONFIG, format!("error: {e}\n"));
    }
    if let Err(e) = fs::create_dir_all(&config.out) {
        return Outcome::new(EXIT_IO, format!("error: cannot create {}: {e}\n", config.out.display()));
    }
    let outcome = match config.command {
        Command::Classify => cmd_classify(&config),
        Command::Solve => cmd_solve(&config, overrides.verbose),
        Command::Futaki => cmd_futaki(&config),
        Command::Sweep => cmd_sweep(&config, overrides.verbose),
        Command::Audit => cmd_audit(&config),
    };
    let outcome = match write_text(&config.out.join("report.txt"), &outcome.report) {
        Ok(()) => outcome,
        Err(e) => Outcome::new(EXIT_IO, format!("{}error: {e}\n", outcome.report)),
    };
    match write_manifest(&config, outcome.code) {
        Ok(()) => outcome,
        Err(e) => Outcome::new(EXIT_IO, format!("{}error: {e}\n", outcome.report)),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    exit_code: i32,
    versions: Versions,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Versions {
    gravvortex: &'static str,
    cli: &'static str,
}

fn write_manifest(config: &RunConfig, code: i32) -> Result<(), String> {
    let manifest = Manifest {
        command: config.command,
        exit_code: code,
        versions: Versions { gravvortex: gravvortex::VERSION, cli: env!("CARGO_PKG_VERSION") },
        config,
    };
    let text = toml::to_string(&manifest).map_err(|e| e.to_string())?;
    write_text(&config.out.join("manifest.toml"), &text)
}

pub fn cmd_classify(config: &RunConfig) -> Outcome {
    let d = match config.divisor() {
        Ok(d) => d,
        Err(e) => return Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    };
    let p = &config.params;
    let n = d.degree();
    let class = classify_divisor(&d);
    let top = hilbert_mumford_destabilized_exponent(&d);
    let mut out = String::new();
    let _ = writeln!(out, "class {class:?}");
    let _ = writeln!(out, "degree {n}");
    let _ = writeln!(out, "hilbert_mumford_exponent {top}");
    let _ = writeln!(out, "bradlow_admissible {}", bradlow_admissible(n, p.tau));
    if config.surface.kind == SurfaceKindSpec::Sphere {
        // limit configuration x₀^{N−ℓ}x₁^ℓ with ℓ the largest multiplicity; ℓ = N is allowed here
        let l = top;
        if p.alpha > 0.0 {
            let f = Complex64::new(0.0, 2.0 * PI * p.alpha * (2.0 * n as f64 - p.tau) * (2.0 * l as f64 - n as f64));
            let _ = writeln!(out, "futaki_limit {:.12e} {:+.12e}i (l = {l}, alpha = {}, tau = {})", f.re, f.im, p.alpha, p.tau);
            let w = maximal_weight(n, top, p.alpha, p.tau);
            let _ = writeln!(out, "maximal_weight {w:.12e}");
        } else {
            let _ = writeln!(out, "futaki_limit skipped (alpha = 0)");
        }
        if class == StabilityClass::StrictlyPolystable {
            let _ = writeln!(out, "weight 0");
        }
    }
    Outcome::new(EXIT_OK, out)
}

pub fn cmd_futaki(config: &RunConfig) -> Outcome {
    let p = &config.params;
    let (n, l) = (p.futaki_n.unwrap_or(1), p.futaki_l.unwrap_or(0));
    let grid = match config.grid() {
        Ok(g) => g,
        Err(e) => return Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    };
    let closed = futaki_closed_form(n, l, p.alpha, p.tau);
    let quad = futaki_quadrature(l, n, p.alpha, p.tau, &grid);
    let (closed, quad) = match (closed, quad) {
        (Ok(c), Ok(q)) => (c, q),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    };
    let diff = (quad.value - closed).norm();
    let (err, tol, kind) = if closed.norm() == 0.0 { (diff, 1e-8, "absolute") } else { (diff / closed.norm(), 1e-5, "relative") };
    let mut out = String::new();
    let _ = writeln!(out, "config N = {n} l = {l} alpha = {} tau = {}", p.alpha, p.tau);
    let _ = writeln!(out, "closed_form {:.15e} {:+.15e}i", closed.re, closed.im);
    let _ = writeln!(out, "quadrature {:.15e} {:+.15e}i", quad.value.re, quad.value.im);
    let _ = writeln!(out, "{kind}_error {err:.3e} (tol {tol:.0e})");
    if let Some(parts) = quad.parts {
        let _ = writeln!(out, "vertical_integral {:.15e}", parts.vertical);
    }
    Outcome::new(if err < tol { EXIT_OK } else { EXIT_NONCONVERGENCE }, out)
}

/// Identifies a solved state on disk, for `audit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub mode: SolveMode,
    pub params: ModelParams,
    pub t: f64,
    pub gauge: f64,
    pub residuals: [f64; 2],
    pub newton_iterations: usize,
}

struct SolveResult {
    code: i32,
    summary: String,
    final_state: Option<GravSolveState>,
}

fn run_single(config: &RunConfig, grid: &SurfaceGrid, d: &Divisor, alpha: f64, dir: &Path, verbose: bool) -> Result<SolveResult, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let p = &config.params;
    let higgs = higgs_norm(d, grid).map_err(|e| e.to_string())?;
    let n = d.degree();
    let mode = p.mode;
    let (params, path, result) = match mode {
        SolveMode::Vortex | SolveMode::Continuity => {
            let target = if mode == SolveMode::Vortex { 0.0 } else { alpha };
            let params = ModelParams::for_grid(grid, target, p.tau, n).map_err(|e| e.to_string())?;
            let opts = ContinuationOptions {
                tol: p.tol,
                initial_step: config.continuation.initial_step,
                min_step: config.continuation.min_step,
                max_newton: 30,
                vortex_max_iter: p.max_iter,
                max_states: config.continuation.max_states,
            };
            let run = run_continuity(grid, &higgs, &params, &opts);
            let result = match run.error {
                Some(e) => Err(e),
                None => Ok(run.states.last().cloned().expect("successful path has a state")),
            };
            (params, run.states, result)
        }
        SolveMode::EinsteinBogomolnyi => {
            let params = ModelParams::einstein_bogomolnyi(p.tau, n).map_err(|e| e.to_string())?;
            let opts = EinsteinBogomolnyiOptions { tol: p.tol, ..Default::default() };
            let run = run_einstein_bogomolnyi_sphere(d, p.tau, grid, &opts);
            (params, run.path, run.result)
        }
    };
    if verbose {
        for s in &path {
            eprintln!("t = {:.6e}  residuals = ({:.3e}, {:.3e})  newton = {}", s.t, s.residuals.0, s.residuals.1, s.newton_iterations);
        }
    }
    let mut log = Vec::new();
    write_path_log(&path, &mut log).map_err(|e| e.to_string())?;
    fs::write(dir.join("path.log"), log).map_err(|e| e.to_string())?;
    let traces: Vec<_> = path.iter().map(|s| s.monitors).collect();
    let flags = flag_blowups(&traces, 5.min(traces.len()).max(2), 10.0);

    let mut summary = String::new();
    let _ = writeln!(summary, "mode {mode:?}");
    let _ = writeln!(summary, "accepted_states {}", path.len());
    for f in &flags {
        let _ = writeln!(summary, "flag {f}");
    }
    match result {
        Ok(state) => {
            export_state(grid, &state, dir)?;
            let record = StateRecord {
                mode,
                params,
                t: state.t,
                gauge: state.gauge,
                residuals: [state.residuals.0, state.residuals.1],
                newton_iterations: state.newton_iterations,
            };
            write_text(&dir.join("state.toml"), &toml::to_string(&record).map_err(|e| e.to_string())?)?;
            let report = audit_state_with(&state, &params, grid, &higgs, &audit_options(config));
            write_text(&dir.join("audit.txt"), &report.to_string())?;
            let _ = writeln!(summary, "converged t = {} residuals = ({:.3e}, {:.3e})", state.t, state.residuals.0, state.residuals.1);
            let _ = write!(summary, "{}", audit_summary(&report));
            let code = if report.all_pass() { EXIT_OK } else { EXIT_AUDIT_FAILED };
            Ok(SolveResult { code, summary, final_state: Some(state) })
        }
        Err(e) => {
            let _ = writeln!(summary, "failed: {e}");
            if let Some(s) = path.last() {
                let _ = writeln!(summary, "last_good_t {}", s.t);
            }
            if let Error::NonConvergence { certificate: Some(c), unresolved, .. } = &e {
                let _ = writeln!(
                    summary,
                    "futaki_certificate class = {:?} exponent = {} futaki = {:.12e}{:+.12e}i maximal_weight = {:.12e}",
                    c.class, c.exponent, c.futaki.re, c.futaki.im, c.maximal_weight
                );
                if let Some(tail) = unresolved {
                    let _ = writeln!(summary, "unresolved_area_density tail = {tail:.3e}");
                }
            }
            write_text(&dir.join("failure.txt"), &summary)?;
            Ok(SolveResult { code: exit_code_for(&e), summary, final_state: None })
        }
    }
}

fn audit_options(config: &RunConfig) -> AuditOptions {
    AuditOptions { seed: config.seed, tol: config.params.tol.max(1e-6), ..Default::default() }
}

fn audit_summary(report: &AuditReport) -> String {
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        format!("audit PASS ({} checks)\n", report.checks.len())
    } else {
        format!("audit FAIL: {}\n", failed.join(", "))
    }
}

fn export_state(grid: &SurfaceGrid, state: &GravSolveState, dir: &Path) -> Result<(), String> {
    for (name, field) in [("f", &state.f), ("v", &state.v)] {
        let mut buf = Vec::new();
        grid.export_field(field, name, &mut buf).map_err(|e| e.to_string())?;
        fs::write(dir.join(format!("{name}.txt")), buf).map_err(|e| e.to_string())?;
    }
    let meta = serde_json::to_string_pretty(&grid.metadata()).map_err(|e| e.to_string())?;
    write_text(&dir.join("grid.json"), &meta)
}

/// Reads a field written by `export_field`.
pub fn import_field(grid: &SurfaceGrid, path: &Path) -> Result<ScalarField, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut values = Vec::with_capacity(grid.len());
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let value = line
            .split_whitespace()
            .nth(3)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| format!("malformed line in {}: {line:?}", path.display()))?;
        values.push(value);
    }
    if values.len() != grid.len() {
        return Err(format!("{} holds {} values, the grid has {}", path.display(), values.len(), grid.len()));
    }
    ScalarField::new(grid, values).map_err(|e| e.to_string())
}

pub fn cmd_solve(config: &RunConfig, verbose: bool) -> Outcome {
    let (grid, d) = match config.grid().and_then(|g| config.divisor().map(|d| (g, d))) {
        Ok(x) => x,
        Err(e) => return Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    };
    match run_single(config, &grid, &d, config.params.alpha, &config.out, verbose) {
        Ok(r) => Outcome::new(r.code, r.summary),
        Err(e) => Outcome::new(EXIT_IO, format!("error: {e}\n")),
    }
}

pub fn cmd_sweep(config: &RunConfig, verbose: bool) -> Outcome {
    let (grid, d) = match config.grid().and_then(|g| config.divisor().map(|d| (g, d))) {
        Ok(x) => x,
        Err(e) => return Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    };
    let sweep = config.sweep.clone().expect("validated sweep table");
    let dirs: Vec<PathBuf> = (0..sweep.alphas.len()).map(|k| config.out.join(format!("run_{k:03}"))).collect();
    let mut results: Vec<Option<Result<SolveResult, String>>> = (0..sweep.alphas.len()).map(|_| None).collect();
    let jobs = sweep.jobs.max(1);
    for (chunk_alphas, (chunk_dirs, chunk_results)) in
        sweep.alphas.chunks(jobs).zip(dirs.chunks(jobs).zip(results.chunks_mut(jobs)))
    {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_alphas
                .iter()
                .zip(chunk_dirs)
                .map(|(&alpha, dir)| {
                    let (grid, d) = (&grid, &d);
                    scope.spawn(move || run_single(config, grid, d, alpha, dir, verbose))
                })
                .collect();
            for (slot, h) in chunk_results.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err("solver thread panicked".into())));
            }
        });
    }
    let mut table = String::from("# run alpha exit_code t_reached r1_sup r2_sup osc_f\n");
    let mut code = EXIT_OK;
    for (k, (alpha, r)) in sweep.alphas.iter().zip(results).enumerate() {
        let r = r.expect("every run finished");
        let (c, line) = match r {
            Ok(r) => {
                let line = match &r.final_state {
                    Some(s) => format!("{:.12e} {:.6e} {:.6e} {:.12e}", s.t, s.residuals.0, s.residuals.1, s.monitors.osc_f),
                    None => "nan nan nan nan".into(),
                };
                (r.code, line)
            }
            Err(_) => (EXIT_IO, "nan nan nan nan".into()),
        };
        if code == EXIT_OK {
            code = c;
        }
        let _ = writeln!(table, "{k} {alpha:.12e} {c} {line}");
    }
    if let Err(e) = write_text(&config.out.join("sweep.txt"), &table) {
        return Outcome::new(EXIT_IO, format!("error: {e}\n"));
    }
    Outcome::new(code, table)
}

pub fn cmd_audit(config: &RunConfig) -> Outcome {
    let input = config.input.clone().expect("validated input directory");
    let result = (|| -> Result<(AuditReport, StateRecord), String> {
        let grid = config.grid().map_err(|e| e.to_string())?;
        let d = config.divisor().map_err(|e| e.to_string())?;
        let higgs = higgs_norm(&d, &grid).map_err(|e| e.to_string())?;
        let text = fs::read_to_string(input.join("state.toml")).map_err(|e| format!("cannot read state record: {e}"))?;
        let record: StateRecord = toml::from_str(&text).map_err(|e| format!("malformed state record: {e}"))?;
        let f = import_field(&grid, &input.join("f.txt"))?;
        let v = import_field(&grid, &input.join("v.txt"))?;
        let mut state = GravSolveState {
            f,
            v,
            t: record.t,
            gauge: record.gauge,
            residuals: (record.residuals[0], record.residuals[1]),
            monitors: Default::default(),
            newton_iterations: record.newton_iterations,
        };
        state.monitors = monitor_estimates(&state, &record.params, &grid, &higgs).map_err(|e| e.to_string())?;
        Ok((audit_state_with(&state, &record.params, &grid, &higgs, &audit_options(config)), record))
    })();
    match result {
        Ok((report, record)) => {
            let text = report.to_string();
            if let Err(e) = write_text(&config.out.join("audit.txt"), &text) {
                return Outcome::new(EXIT_IO, format!("error: {e}\n"));
            }
            let code = if report.all_pass() { EXIT_OK } else { EXIT_AUDIT_FAILED };
            Outcome::new(code, format!("# state {:?} t = {}\n{text}{}", record.mode, record.t, audit_summary(&report)))
        }
        Err(e) => Outcome::new(EXIT_CONFIG, format!("error: {e}\n")),
    }
}
