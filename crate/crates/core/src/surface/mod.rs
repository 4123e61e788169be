//! Background surfaces normalized to area 2π: the flat torus and the round sphere.
//!
//! The torus is a uniform periodic grid in lattice coordinates `ζ = x + y·τ_lat`
//! with a Fourier Laplacian. The sphere uses Gauss–Legendre latitudes in
//! `μ = cos θ` and uniform longitudes, so no node lies on a pole. After an FFT in
//! longitude each azimuthal wavenumber gets a dense Legendre-type zonal operator,
//! so both Laplacians are spectrally accurate and exactly self-adjoint for the
//! quadrature weights.
//!
//! `laplacian` is the positive operator `Δ = -div grad`, so `Δf ≥ 0` at a maximum.

mod legendre;
mod sphere;
mod torus;

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};


/// Total area of every grid.
pub const VOLUME: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    Torus { modulus: Complex64 },
    Sphere,
}

impl SurfaceKind {
    pub fn genus(&self) -> u32 {
        match self {
            SurfaceKind::Torus { .. } => 1,
            SurfaceKind::Sphere => 0,
        }
    }

    pub fn euler_characteristic(&self) -> i32 {
        2 - 2 * self.genus() as i32
    }

    /// Gaussian curvature of the background metric.
    pub fn background_curvature(&self) -> f64 {
        self.euler_characteristic() as f64
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurfaceKind::Torus { .. } => "torus",
            SurfaceKind::Sphere => "sphere",
        }
    }
}

/// Identifies grids with identical construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId {
    sphere: bool,
    n1: usize,
    n2: usize,
    modulus: (u64, u64),
}

/// Where a node sits: its chart coordinate plus the two export coordinates
/// (lattice `x, y` on the torus, colatitude and longitude on the sphere).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePosition {
    pub chart: Complex64,
    pub c1: f64,
    pub c2: f64,
}

enum Ops {
    Torus(torus::TorusOps),
    Sphere(sphere::SphereOps),
}

pub struct SurfaceGrid {
    kind: SurfaceKind,
    n1: usize,
    n2: usize,
    weights: Vec<f64>,
    positions: Vec<NodePosition>,
    conformal: Vec<f64>,
    ops: Ops,
}

impl fmt::Debug for SurfaceGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceGrid")
            .field("kind", &self.kind)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .finish()
    }
}

pub fn make_torus_grid(n1: usize, n2: usize, lattice_modulus: Complex64) -> Result<SurfaceGrid> {
    if n1 < 8 || n2 < 8 {
        return Err(Error::ResolutionTooSmall(n1, n2));
    }
    if !(lattice_modulus.im > 0.0) || !lattice_modulus.re.is_finite() || !lattice_modulus.im.is_finite() {
        return Err(Error::DegenerateLattice(lattice_modulus.im));
    }
    let ops = torus::TorusOps::new(n1, n2, lattice_modulus);
    let s2 = ops.scale * ops.scale;
    let w = VOLUME / (n1 * n2) as f64;
    let mut positions = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let x = i as f64 / n1 as f64;
            let y = j as f64 / n2 as f64;
            positions.push(NodePosition { chart: x + y * lattice_modulus, c1: x, c2: y });
        }
    }
    Ok(SurfaceGrid {
        kind: SurfaceKind::Torus { modulus: lattice_modulus },
        n1,
        n2,
        weights: vec![w; n1 * n2],
        positions,
        conformal: vec![s2; n1 * n2],
        ops: Ops::Torus(ops),
    })
}

pub fn make_sphere_grid(n_theta: usize, n_phi: usize) -> Result<SurfaceGrid> {
    if n_theta < 8 || n_phi < 8 {
        return Err(Error::ResolutionTooSmall(n_theta, n_phi));
    }
    let ops = sphere::SphereOps::new(n_theta, n_phi);
    let dpsi = 2.0 * PI / n_phi as f64;
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    let mut positions = Vec::with_capacity(n_theta * n_phi);
    let mut conformal = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let mu = ops.mu[i];
        let r = ((1.0 + mu) / (1.0 - mu)).sqrt();
        for j in 0..n_phi {
            let psi = j as f64 * dpsi;
            weights.push(ops.gw[i] * dpsi * 0.5);
            positions.push(NodePosition { chart: Complex64::from_polar(r, psi), c1: mu.acos(), c2: psi });
            // 2/(1+|z|^2)^2 written through mu to stay finite near infinity
            conformal.push(0.5 * (1.0 - mu) * (1.0 - mu));
        }
    }
    Ok(SurfaceGrid {
        kind: SurfaceKind::Sphere,
        n1: n_theta,
        n2: n_phi,
        weights,
        positions,
        conformal,
        ops: Ops::Sphere(ops),
    })
}

impl SurfaceGrid {
    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn id(&self) -> GridId {
        let modulus = match self.kind {
            SurfaceKind::Torus { modulus } => (modulus.re.to_bits(), modulus.im.to_bits()),
            SurfaceKind::Sphere => (0, 0),
        };
        GridId { sphere: self.kind == SurfaceKind::Sphere, n1: self.n1, n2: self.n2, modulus }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn positions(&self) -> &[NodePosition] {
        &self.positions
    }

    /// Background metric density relative to the chart: `ω₀ = conformal · (i/2) dz∧dz̄`.
    pub fn conformal_factor(&self) -> &[f64] {
        &self.conformal
    }

    pub fn is_sphere(&self) -> bool {
        self.kind == SurfaceKind::Sphere
    }

    /// `μ = cos θ` of every node (sphere only).
    pub fn sphere_mu(&self) -> Result<Vec<f64>> {
        match &self.ops {
            Ops::Sphere(s) => Ok((0..self.len()).map(|k| s.mu[k / self.n2]).collect()),
            Ops::Torus(_) => Err(Error::GridKind { expected: "sphere" }),
        }
    }

    fn check(&self, field: &ScalarField) -> Result<()> {
        if field.grid != self.id() || field.values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn laplacian(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        let mut out = vec![0.0; self.len()];
        self.apply_laplacian(&field.values, &mut out);
        Ok(ScalarField { values: out, grid: self.id() })
    }

    pub fn integrate(&self, field: &ScalarField) -> Result<f64> {
        self.check(field)?;
        Ok(self.integral(&field.values))
    }

    pub fn gradient_squared(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        let values = match &self.ops {
            Ops::Torus(t) => t.gradient_squared(&field.values),
            Ops::Sphere(s) => s.gradient_squared(&field.values),
        };
        Ok(ScalarField { values, grid: self.id() })
    }

    /// `∂_μ` of a field (sphere only), spectral in latitude.
    pub fn mu_derivative(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        match &self.ops {
            Ops::Sphere(s) => Ok(ScalarField { values: s.derivatives(&field.values).0, grid: self.id() }),
            Ops::Torus(_) => Err(Error::GridKind { expected: "sphere" }),
        }
    }

    /// `∂_ψ` of a field (sphere only), spectral in longitude.
    pub fn psi_derivative(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        match &self.ops {
            Ops::Sphere(s) => Ok(ScalarField { values: s.derivatives(&field.values).1, grid: self.id() }),
            Ops::Torus(_) => Err(Error::GridKind { expected: "sphere" }),
        }
    }

    pub(crate) fn apply_laplacian(&self, x: &[f64], out: &mut [f64]) {
        let mean = self.integral(x) / VOLUME;
        let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
        match &self.ops {
            Ops::Torus(t) => t.laplacian(&centred, out),
            Ops::Sphere(s) => s.laplacian(&centred, out),
        }
    }

    pub(crate) fn lap(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_laplacian(x, &mut out);
        out
    }

    /// Laplacian for derived diagnostics. On the sphere it drops the modes above
    /// degree `n_θ`, which carry no resolved content but amplify roundoff near
    /// the poles by a factor of order `n_θ⁴`.
    pub(crate) fn lap_resolved(&self, x: &[f64]) -> Vec<f64> {
        match &self.ops {
            Ops::Sphere(s) => {
                let mut out = vec![0.0; x.len()];
                s.truncated_laplacian(x, self.resolution().0, &mut out);
                out
            }
            Ops::Torus(_) => self.lap(x),
        }
    }

    pub(crate) fn integral(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Solves `(Δ + shift) x = b`; for `shift = 0` the mean-zero solution.
    pub(crate) fn shifted_inverse(&self, shift: f64, b: &[f64], out: &mut [f64]) {
        match &self.ops {
            Ops::Torus(t) => t.shifted_inverse(shift, b, out),
            Ops::Sphere(s) => s.shifted_inverse(shift, b, out),
        }
    }

    /// Solves a 2×2 block system `(Δ·I + A) x = b` with constant coefficients,
    /// applied mode by mode. Input and output are stacked `[first; second]`.
    pub(crate) fn block_inverse(&self, a: [[f64; 2]; 2], b: &[f64], out: &mut [f64]) {
        match &self.ops {
            Ops::Torus(t) => t.block_inverse(a, b, out),
            Ops::Sphere(s) => s.block_inverse(a, b, out),
        }
    }

    /// Relative L² weight of the spherical-harmonic content above degree
    /// `2n_θ/3`. Small for fields the grid resolves.
    pub fn spectral_tail(&self, field: &ScalarField) -> Result<f64> {
        self.check(field)?;
        match &self.ops {
            Ops::Sphere(s) => Ok(s.spectral_tail(&field.values, 2 * self.resolution().0 / 3)),
            Ops::Torus(_) => Err(Error::GridKind { expected: "sphere" }),
        }
    }

    /// Per-row variance along the second coordinate, maximized over rows (sphere:
    /// the azimuthal variance).
    pub fn max_row_variance(&self, field: &ScalarField) -> Result<f64> {
        self.check(field)?;
        let mut worst: f64 = 0.0;
        for row in field.values.chunks(self.n2) {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / row.len() as f64;
            worst = worst.max(v);
        }
        Ok(worst)
    }

    pub fn metadata(&self) -> GridMetadata {
        let (modulus, coordinates) = match self.kind {
            SurfaceKind::Torus { modulus } => (Some([modulus.re, modulus.im]), "lattice x, lattice y"),
            SurfaceKind::Sphere => (None, "colatitude, longitude"),
        };
        GridMetadata {
            kind: self.kind.name().to_string(),
            resolution: [self.n1, self.n2],
            lattice_modulus: modulus,
            volume: VOLUME,
            coordinates: coordinates.to_string(),
        }
    }

    /// Columnar text: node index, coordinate 1, coordinate 2, value.
    pub fn export_field<W: Write>(&self, field: &ScalarField, name: &str, mut w: W) -> Result<()> {
        self.check(field)?;
        let io = |e: std::io::Error| Error::Precondition(format!("write failed: {e}"));
        writeln!(w, "# {name}: index c1 c2 value").map_err(io)?;
        for (k, (p, v)) in self.positions.iter().zip(&field.values).enumerate() {
            writeln!(w, "{k} {:.17e} {:.17e} {:.17e}", p.c1, p.c2, v).map_err(io)?;
        }
        Ok(())
    }
}

/// Sidecar record written next to exported fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub kind: String,
    pub resolution: [usize; 2],
    pub lattice_modulus: Option<[f64; 2]>,
    pub volume: f64,
    pub coordinates: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    grid: GridId,
}

impl ScalarField {
    pub fn new(grid: &SurfaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { values, grid: grid.id() })
    }

    pub fn constant(grid: &SurfaceGrid, c: f64) -> Self {
        ScalarField { values: vec![c; grid.len()], grid: grid.id() }
    }

    pub fn from_fn(grid: &SurfaceGrid, f: impl Fn(&NodePosition) -> f64) -> Result<Self> {
        Self::new(grid, grid.positions.iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { values, grid: self.grid })
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { values, grid: self.grid })
    }

    pub(crate) fn from_raw(grid: &SurfaceGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { values, grid: grid.id() }
    }
}

/// A smooth random field: low Fourier modes on the torus, a cubic polynomial in
/// the ambient coordinates on the sphere. Scaled to sup-norm `amplitude`.
pub fn smooth_random_field<R: Rng>(grid: &SurfaceGrid, rng: &mut R, amplitude: f64) -> ScalarField {
    let values: Vec<f64> = match grid.kind {
        SurfaceKind::Torus { .. } => {
            let modes: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.gen_range(-3..=3) as f64,
                        rng.gen_range(-3..=3) as f64,
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            grid.positions
                .iter()
                .map(|p| modes.iter().map(|(k1, k2, a, ph)| a * (2.0 * PI * (k1 * p.c1 + k2 * p.c2) + ph).cos()).sum())
                .collect()
        }
        SurfaceKind::Sphere => {
            let coef: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mono = |x: f64, y: f64, z: f64| -> [f64; 20] {
                [
                    1.0, x, y, z, x * x, y * y, z * z, x * y, y * z, z * x,
                    x * x * x, y * y * y, z * z * z, x * x * y, x * x * z, y * y * x, y * y * z, z * z * x, z * z * y,
                    x * y * z,
                ]
            };
            grid.positions
                .iter()
                .map(|p| {
                    let z = p.c1.cos();
                    let s = p.c1.sin();
                    let m = mono(s * p.c2.cos(), s * p.c2.sin(), z);
                    m.iter().zip(&coef).skip(1).map(|(a, b)| a * b).sum()
                })
                .collect()
        }
    };
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    ScalarField::from_raw(grid, values.iter().map(|v| v * amplitude / sup).collect())
}

#[cfg(test)]
mod tests;
