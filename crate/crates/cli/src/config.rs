//! Run configuration: a flat TOML document validated before any solve.
//!
//! Every surface has area 2π; that convention is fixed and not configurable.

use std::path::{Path, PathBuf};

use gravvortex::higgs::{bradlow_admissible, Divisor, DivisorEntry};
use gravvortex::surface::{make_sphere_grid, make_torus_grid, SurfaceGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Classify,
    Solve,
    Futaki,
    Sweep,
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKindSpec {
    Torus,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub kind: SurfaceKindSpec,
    /// `[n1, n2]` on the torus, `[latitudes, longitudes]` on the sphere.
    pub resolution: [usize; 2],
    /// Lattice modulus `[re, im]`, torus only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Fixed-background vortex equation.
    Vortex,
    /// Continuity path from `t = 0` to `alpha`.
    Continuity,
    /// `c = 0` on the sphere; `alpha` is fixed to `1/(τN)`.
    EinsteinBogomolnyi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tau: f64,
    /// Coupling constant; the continuity target in `continuity` mode.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_mode")]
    pub mode: SolveMode,
    /// Degree and exponent of the monomial configuration for `futaki`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futaki_n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futaki_l: Option<u32>,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

fn default_mode() -> SolveMode {
    SolveMode::Vortex
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
}

fn default_min_step() -> f64 {
    1e-6
}

fn default_max_states() -> usize {
    5000
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation { initial_step: None, min_step: default_min_step(), max_states: default_max_states() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    /// Coupling targets, one independent solve each.
    pub alphas: Vec<f64>,
    /// Worker threads; results do not depend on it.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Replaced by the subcommand when run from the command line.
    #[serde(default = "default_command")]
    pub command: Command,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// At most `i64::MAX`, the largest TOML integer.
    #[serde(default)]
    pub seed: u64,
    pub surface: SurfaceSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub divisor: Vec<DivisorEntry>,
    pub params: Params,
    #[serde(default)]
    pub continuation: Continuation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Output directory of an earlier `solve`, for `audit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

fn default_command() -> Command {
    Command::Solve
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    pub fn divisor(&self) -> Result<Divisor, ConfigError> {
        Divisor::from_entries(&self.divisor).map_err(|e| bad(e.to_string()))
    }

    pub fn grid(&self) -> Result<SurfaceGrid, ConfigError> {
        let [n1, n2] = self.surface.resolution;
        let grid = match self.surface.kind {
            SurfaceKindSpec::Torus => {
                let [re, im] = self.surface.modulus.unwrap_or([0.0, 1.0]);
                make_torus_grid(n1, n2, Complex64::new(re, im))
            }
            SurfaceKindSpec::Sphere => make_sphere_grid(n1, n2),
        };
        grid.map_err(|e| bad(e.to_string()))
    }

    /// Checks every numeric field against the preconditions of the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        let [n1, n2] = self.surface.resolution;
        if n1 < 8 || n2 < 8 {
            return Err(bad(format!("resolution {n1}x{n2} is below 8x8")));
        }
        match (self.surface.kind, self.surface.modulus) {
            (SurfaceKindSpec::Torus, Some([re, im])) if !(im > 0.0) || !re.is_finite() || !im.is_finite() => {
                return Err(bad(format!("lattice modulus must have positive imaginary part, got [{re}, {im}]")))
            }
            (SurfaceKindSpec::Sphere, Some(_)) => return Err(bad("a lattice modulus only applies to the torus")),
            _ => {}
        }
        if !(p.tau > 0.0) || !p.tau.is_finite() {
            return Err(bad(format!("tau must be finite and positive, got {}", p.tau)));
        }
        if !(p.alpha >= 0.0) || !p.alpha.is_finite() {
            return Err(bad(format!("alpha must be finite and >= 0, got {}", p.alpha)));
        }
        if !(p.tol > 0.0) || !p.tol.is_finite() {
            return Err(bad(format!("tol must be finite and positive, got {}", p.tol)));
        }
        if p.max_iter == 0 {
            return Err(bad("max_iter must be at least 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(bad("seed must be at most i64::MAX"));
        }
        let c = &self.continuation;
        if !(c.min_step > 0.0) || c.initial_step.is_some_and(|s| !(s > 0.0) || !s.is_finite()) || c.max_states == 0 {
            return Err(bad("continuation steps must be positive"));
        }
        match self.command {
            Command::Futaki => {
                if self.surface.kind != SurfaceKindSpec::Sphere {
                    return Err(bad("futaki is defined on the sphere only"));
                }
                let (n, l) = (p.futaki_n.ok_or_else(|| bad("futaki needs params.futaki_n"))?, p.futaki_l.unwrap_or(0));
                if n == 0 || l >= n {
                    return Err(bad(format!("futaki needs 0 <= l < N, got l = {l}, N = {n}")));
                }
                if !(p.alpha > 0.0) {
                    return Err(bad("futaki needs alpha > 0"));
                }
            }
            Command::Classify => {
                self.divisor()?;
            }
            Command::Solve | Command::Sweep | Command::Audit => {
                let d = self.divisor()?;
                if !bradlow_admissible(d.degree(), p.tau) {
                    return Err(bad(format!("N = {} violates N < tau/2 for tau = {}", d.degree(), p.tau)));
                }
                if p.mode == SolveMode::EinsteinBogomolnyi && self.surface.kind != SurfaceKindSpec::Sphere {
                    return Err(bad("einstein-bogomolnyi mode needs the sphere"));
                }
                if self.command == Command::Sweep {
                    let s = self.sweep.as_ref().ok_or_else(|| bad("sweep needs a [sweep] table"))?;
                    if s.alphas.is_empty() || s.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                        return Err(bad("sweep alphas must be a nonempty list of finite values >= 0"));
                    }
                    if s.jobs == 0 {
                        return Err(bad("sweep jobs must be at least 1"));
                    }
                }
                if self.command == Command::Audit && self.input.is_none() {
                    return Err(bad("audit needs input = <directory of an earlier solve>"));
                }
            }
        }
        Ok(())
    }
}
