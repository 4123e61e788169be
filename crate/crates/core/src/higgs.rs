//! Effective divisors, Higgs norms `|φ|²_{h₀}` and GIT stability on P¹.
//!
//! On the sphere `|φ|²_{h₀} = |p(z)|²/(1+|z|²)^N` with `p` monic and vanishing on
//! the finite part of `D`; a point at infinity lowers the degree of `p`. On the
//! torus each point contributes a translated odd theta factor with the Gaussian
//! correction that makes it doubly periodic, so that `Δ₀ ln|φ|²_{h₀} = 2N` off `D`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{ScalarField, SurfaceGrid, SurfaceKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivisorPoint {
    Finite(Complex64),
    Infinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divisor {
    points: Vec<DivisorPoint>,
    multiplicities: Vec<u32>,
}

const SAME_POINT: f64 = 1e-12;

impl Divisor {
    pub fn new(points: Vec<DivisorPoint>, multiplicities: Vec<u32>) -> Result<Self> {
        if points.len() != multiplicities.len() {
            return Err(Error::InvalidDivisor("points and multiplicities differ in length".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidDivisor("empty divisor".into()));
        }
        if multiplicities.iter().any(|&n| n == 0) {
            return Err(Error::InvalidDivisor("multiplicities must be at least 1".into()));
        }
        for (k, p) in points.iter().enumerate() {
            if let DivisorPoint::Finite(z) = p {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::InvalidDivisor(format!("point {k} is not finite")));
                }
            }
            for q in &points[..k] {
                let same = match (p, q) {
                    (DivisorPoint::Infinity, DivisorPoint::Infinity) => true,
                    (DivisorPoint::Finite(a), DivisorPoint::Finite(b)) => (a - b).norm() < SAME_POINT,
                    _ => false,
                };
                if same {
                    return Err(Error::InvalidDivisor(format!("point {k} repeats an earlier point")));
                }
            }
        }
        Ok(Divisor { points, multiplicities })
    }

    /// Single-point-per-entry constructor: `[(point, n)]`.
    pub fn from_pairs(pairs: &[(DivisorPoint, u32)]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn points(&self) -> &[DivisorPoint] {
        &self.points
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn degree(&self) -> u32 {
        self.multiplicities.iter().sum()
    }

    pub fn max_multiplicity(&self) -> u32 {
        *self.multiplicities.iter().max().expect("divisor is nonempty")
    }

    /// Multiplicity at a given point, 0 if absent.
    pub fn multiplicity_at(&self, point: DivisorPoint) -> u32 {
        self.points
            .iter()
            .zip(&self.multiplicities)
            .find(|(p, _)| match (p, &point) {
                (DivisorPoint::Infinity, DivisorPoint::Infinity) => true,
                (DivisorPoint::Finite(a), DivisorPoint::Finite(b)) => (a - b).norm() < SAME_POINT,
                _ => false,
            })
            .map_or(0, |(_, &n)| n)
    }

    pub fn to_entries(&self) -> Vec<DivisorEntry> {
        self.points
            .iter()
            .zip(&self.multiplicities)
            .map(|(p, &n)| DivisorEntry {
                point: match p {
                    DivisorPoint::Infinity => PointSpec::Label("inf".into()),
                    DivisorPoint::Finite(z) => PointSpec::Pair([z.re, z.im]),
                },
                multiplicity: n,
            })
            .collect()
    }

    pub fn from_entries(entries: &[DivisorEntry]) -> Result<Self> {
        let mut points = Vec::with_capacity(entries.len());
        for e in entries {
            points.push(match &e.point {
                PointSpec::Label(s) if s.eq_ignore_ascii_case("inf") => DivisorPoint::Infinity,
                PointSpec::Label(s) => return Err(Error::InvalidDivisor(format!("unknown point label {s:?}"))),
                PointSpec::Pair([re, im]) => DivisorPoint::Finite(Complex64::new(*re, *im)),
                PointSpec::Real(x) => DivisorPoint::Finite(Complex64::new(*x, 0.0)),
            });
        }
        Self::new(points, entries.iter().map(|e| e.multiplicity).collect())
    }

    /// Parses a JSON list of `{"point": [re, im] | re | "inf", "multiplicity": n}`.
    pub fn parse_json(text: &str) -> Result<Self> {
        let entries: Vec<DivisorEntry> =
            serde_json::from_str(text).map_err(|e| Error::InvalidDivisor(format!("malformed divisor: {e}")))?;
        Self::from_entries(&entries)
    }
}

/// Serialized form of one divisor point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisorEntry {
    pub point: PointSpec,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Label(String),
    Pair([f64; 2]),
    Real(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    Stable,
    StrictlyPolystable,
    /// Largest multiplicity exactly N/2 but more than two points: semistable, not polystable.
    StrictlySemistable,
    Unstable,
}

impl StabilityClass {
    pub fn is_polystable(self) -> bool {
        matches!(self, StabilityClass::Stable | StabilityClass::StrictlyPolystable)
    }
}

pub fn classify_divisor(d: &Divisor) -> StabilityClass {
    let n = d.degree();
    let top = d.max_multiplicity();
    if 2 * top < n {
        StabilityClass::Stable
    } else if 2 * top > n {
        StabilityClass::Unstable
    } else if d.points.len() == 2 {
        StabilityClass::StrictlyPolystable
    } else {
        StabilityClass::StrictlySemistable
    }
}

/// Exponent `ℓ` of the limit `x₀^{N−ℓ} x₁^ℓ` under the optimal one-parameter
/// subgroup, the largest multiplicity.
pub fn hilbert_mumford_destabilized_exponent(d: &Divisor) -> u32 {
    d.max_multiplicity()
}

/// Existence criterion for vortices on a surface of area 2π: `N < τ/2`.
pub fn bradlow_admissible(n: u32, tau: f64) -> bool {
    (n as f64) < tau / 2.0
}

/// `|φ|²_{h₀}` at the point with `μ = cos θ` and longitude `ψ`.
pub fn higgs_norm_sphere_at(d: &Divisor, mu: f64, psi: f64) -> f64 {
    let south = 0.5 * (1.0 + mu);
    let north = 0.5 * (1.0 - mu);
    let rad = (1.0 - mu * mu).max(0.0).sqrt();
    let dir = Complex64::from_polar(1.0, psi);
    let mut h = 1.0;
    for (p, &n) in d.points.iter().zip(&d.multiplicities) {
        let factor = match p {
            DivisorPoint::Infinity => north,
            DivisorPoint::Finite(a) => {
                let cross = (dir * a.conj()).re;
                (south - cross * rad + a.norm_sqr() * north).max(0.0)
            }
        };
        h *= factor.powi(n as i32);
    }
    h
}

pub fn higgs_norm_sphere(d: &Divisor, grid: &SurfaceGrid) -> Result<ScalarField> {
    if !grid.is_sphere() {
        return Err(Error::GridKind { expected: "sphere" });
    }
    let mu = grid.sphere_mu()?;
    let values = grid.positions().iter().zip(&mu).map(|(p, &m)| higgs_norm_sphere_at(d, m, p.c2)).collect();
    ScalarField::new(grid, values)
}

/// Odd Jacobi theta function `θ₁(w | τ)` with `q = e^{iπτ}`; terms below 1e−14 stop the series.
pub fn theta1(w: Complex64, modulus: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..200 {
        let nh = n as f64 + 0.5;
        let term = (i * PI * modulus * nh * nh).exp() * ((2.0 * n as f64 + 1.0) * PI * w).sin();
        let term = if n % 2 == 0 { term } else { -term };
        sum += term;
        if term.norm() < 1e-14 && n > 0 {
            break;
        }
    }
    2.0 * sum
}

/// Lattice coordinates `(x, y)` with `ζ = x + y τ_lat`.
fn lattice_coords(zeta: Complex64, modulus: Complex64) -> (f64, f64) {
    let y = zeta.im / modulus.im;
    (zeta.re - y * modulus.re, y)
}

/// One theta factor `|θ₁(ζ−p)|² e^{−2π (Im(ζ−p))²/Im τ}`, evaluated after reducing `ζ − p`
/// to the cell centred at the origin.
fn theta_factor(w: Complex64, modulus: Complex64) -> f64 {
    let (x, y) = lattice_coords(w, modulus);
    let w = (x - x.round()) + (y - y.round()) * modulus;
    theta1(w, modulus).norm_sqr() * (-2.0 * PI * w.im * w.im / modulus.im).exp()
}

pub fn higgs_norm_torus_at(d: &Divisor, modulus: Complex64, zeta: Complex64) -> f64 {
    d.points
        .iter()
        .zip(&d.multiplicities)
        .map(|(p, &n)| match p {
            DivisorPoint::Finite(a) => theta_factor(zeta - a, modulus).powi(n as i32),
            DivisorPoint::Infinity => 0.0,
        })
        .product()
}

pub fn higgs_norm_torus(d: &Divisor, grid: &SurfaceGrid) -> Result<ScalarField> {
    let modulus = match grid.kind() {
        SurfaceKind::Torus { modulus } => modulus,
        SurfaceKind::Sphere => return Err(Error::GridKind { expected: "torus" }),
    };
    for (k, p) in d.points.iter().enumerate() {
        let inside = match p {
            DivisorPoint::Infinity => false,
            DivisorPoint::Finite(z) => {
                let (x, y) = lattice_coords(*z, modulus);
                (0.0..1.0).contains(&x) && (0.0..1.0).contains(&y)
            }
        };
        if !inside {
            return Err(Error::InvalidDivisor(format!("point {k} is outside the fundamental domain")));
        }
    }
    let values = grid.positions().iter().map(|p| higgs_norm_torus_at(d, modulus, p.chart)).collect();
    ScalarField::new(grid, values)
}

/// Dispatches on the grid kind.
pub fn higgs_norm(d: &Divisor, grid: &SurfaceGrid) -> Result<ScalarField> {
    match grid.kind() {
        SurfaceKind::Sphere => higgs_norm_sphere(d, grid),
        SurfaceKind::Torus { .. } => higgs_norm_torus(d, grid),
    }
}
