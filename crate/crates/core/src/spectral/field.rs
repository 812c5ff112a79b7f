use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Axis, Geometry, Grid};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Symmetry of a field in y. Torus fields are `Periodic`; channel fields are
/// either `Even` (cosine series) or `Odd` (sine series, vanishing on walls).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Periodic,
    Even,
    Odd,
}

impl Parity {
    /// Parity of density-like scalars on `geometry`.
    pub fn scalar(geometry: Geometry) -> Parity {
        match geometry {
            Geometry::Torus2D => Parity::Periodic,
            Geometry::Channel2D => Parity::Even,
        }
    }

    /// Parity of stream functions (vanishing on the walls).
    pub fn stream(geometry: Geometry) -> Parity {
        match geometry {
            Geometry::Torus2D => Parity::Periodic,
            Geometry::Channel2D => Parity::Odd,
        }
    }

    /// Parities of the `(u, w)` velocity components.
    pub fn velocity(geometry: Geometry) -> (Parity, Parity) {
        match geometry {
            Geometry::Torus2D => (Parity::Periodic, Parity::Periodic),
            Geometry::Channel2D => (Parity::Even, Parity::Odd),
        }
    }

    pub fn flipped(self) -> Parity {
        match self {
            Parity::Periodic => Parity::Periodic,
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::Periodic, _) | (_, Parity::Periodic) => Parity::Periodic,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }

    pub(crate) fn check(self, geometry: Geometry) -> Result<()> {
        let ok = match geometry {
            Geometry::Torus2D => self == Parity::Periodic,
            Geometry::Channel2D => self != Parity::Periodic,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ParityMismatch {
                geometry,
                parity: self,
            })
        }
    }
}

/// A real scalar field held by its Fourier coefficients.
///
/// Physical samples are derived on demand and cached. Channel fields are
/// represented through their even or odd extension onto `[0, 2pi)` in y, so
/// the coefficient array is `nx x 2ny` and satisfies `c(kx, -ky) = +-c(kx, ky)`.
pub struct ScalarField {
    grid: Grid,
    parity: Parity,
    coeffs: Array2<Complex64>,
    values: OnceLock<Array2<f64>>,
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            parity: self.parity,
            coeffs: self.coeffs.clone(),
            values: self.values.clone(),
        }
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("parity", &self.parity)
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn zeros(grid: &Grid, parity: Parity) -> Result<Self> {
        parity.check(grid.geometry())?;
        Ok(Self::from_parts(
            grid.clone(),
            parity,
            Array2::zeros(grid.spectral_shape()),
        ))
    }

    /// Build from physical samples of shape [`Grid::physical_shape`].
    ///
    /// The Nyquist row and column are discarded, and channel data are
    /// projected onto the requested parity.
    pub fn from_values(grid: &Grid, parity: Parity, values: &Array2<f64>) -> Result<Self> {
        parity.check(grid.geometry())?;
        let expected = grid.physical_shape();
        if values.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: values.dim(),
            });
        }
        let periodic = match grid.geometry() {
            Geometry::Torus2D => values.to_owned(),
            Geometry::Channel2D => {
                let (nx, my) = grid.spectral_shape();
                let ny = grid.ny();
                let sign = if parity == Parity::Odd { -1.0 } else { 1.0 };
                let mut ext = Array2::zeros((nx, my));
                ext.slice_mut(s![.., 0..=ny]).assign(values);
                for j in ny + 1..my {
                    let src = values.column(my - j).mapv(|v| sign * v);
                    ext.column_mut(j).assign(&src);
                }
                ext
            }
        };
        let mut coeffs = grid.forward(&periodic);
        project_parity(grid, parity, &mut coeffs);
        Ok(Self::from_parts(grid.clone(), parity, coeffs))
    }

    /// Sample `f(x, y)` on the physical grid.
    pub fn from_fn(grid: &Grid, parity: Parity, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = grid.x_coords();
        let ys = grid.y_coords();
        let values = Array2::from_shape_fn(grid.physical_shape(), |(i, j)| f(xs[i], ys[j]));
        Self::from_values(grid, parity, &values)
    }

    /// Random real field with modes `|kx|, |ky| <= band`, amplitudes decaying
    /// like `1 / (1 + |k|^2)`. Mean-free unless `keep_mean`.
    pub fn random<R: Rng + ?Sized>(
        grid: &Grid,
        parity: Parity,
        band: usize,
        keep_mean: bool,
        rng: &mut R,
    ) -> Result<Self> {
        parity.check(grid.geometry())?;
        let (nx, my) = grid.spectral_shape();
        let band = band.min(nx / 2 - 1).min(my / 2 - 1) as i64;
        let mut coeffs = Array2::<Complex64>::zeros((nx, my));
        for i in 0..nx {
            for j in 0..my {
                let (kx, ky) = (grid.kx()[i], grid.ky()[j]);
                if kx.abs() <= band && ky.abs() <= band {
                    let amp = 1.0 / (1.0 + grid.k2(i, j));
                    coeffs[[i, j]] = Complex64::new(
                        rng.random_range(-1.0..1.0) * amp,
                        rng.random_range(-1.0..1.0) * amp,
                    );
                }
            }
        }
        if !keep_mean {
            coeffs[[0, 0]] = ZERO;
        }
        // Keep the real part (Hermitian symmetrization) through a round trip.
        let mut coeffs = grid.forward(&grid.inverse(&coeffs));
        project_parity(grid, parity, &mut coeffs);
        Ok(Self::from_parts(grid.clone(), parity, coeffs))
    }

    pub(crate) fn from_parts(grid: Grid, parity: Parity, coeffs: Array2<Complex64>) -> Self {
        debug_assert_eq!(coeffs.dim(), grid.spectral_shape());
        ScalarField {
            grid,
            parity,
            coeffs,
            values: OnceLock::new(),
        }
    }

    /// Samples on the 3/2-padded grid.
    pub(crate) fn padded(&self) -> Array2<f64> {
        self.grid.to_padded(&self.coeffs)
    }

    pub(crate) fn from_padded(grid: &Grid, parity: Parity, values: &Array2<f64>) -> Self {
        let mut coeffs = grid.truncate_padded(values);
        project_parity(grid, parity, &mut coeffs);
        Self::from_parts(grid.clone(), parity, coeffs)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Full-spectrum coefficients in FFT order.
    pub fn coefficients(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    /// Channel only: cosine (even) or sine (odd) coefficients per x-mode,
    /// shape `nx x (ny + 1)`, such that
    /// `f = sum_m a_m(x) cos(m y)` or `f = sum_m b_m(x) sin(m y)`.
    pub fn half_range_coefficients(&self) -> Option<Array2<Complex64>> {
        if self.grid.geometry() != Geometry::Channel2D {
            return None;
        }
        let (nx, _) = self.grid.spectral_shape();
        let ny = self.grid.ny();
        let mut out = Array2::zeros((nx, ny + 1));
        for i in 0..nx {
            for m in 0..ny {
                let c = self.coeffs[[i, m]];
                out[[i, m]] = match (self.parity, m) {
                    (Parity::Even, 0) => c,
                    (Parity::Even, _) => 2.0 * c,
                    _ => 2.0 * Complex64::i() * c,
                };
            }
        }
        Some(out)
    }

    /// Physical samples, shape [`Grid::physical_shape`].
    pub fn values(&self) -> &Array2<f64> {
        self.values.get_or_init(|| {
            let full = self.grid.inverse(&self.coeffs);
            let (nx, ny) = self.grid.physical_shape();
            full.slice(s![0..nx, 0..ny]).to_owned()
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Spatial mean.
    pub fn mean(&self) -> f64 {
        self.coeffs[[0, 0]].re
    }

    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.area()
    }

    /// `sum_k w(k) |c_k|^2` times the domain area.
    pub(crate) fn weighted_energy(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for ((i, j), c) in self.coeffs.indexed_iter() {
            if c.re != 0.0 || c.im != 0.0 {
                acc += weight(self.grid.k2(i, j)) * c.norm_sqr();
            }
        }
        acc * self.grid.area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_energy(|_| 1.0).sqrt()
    }

    /// L2 inner product over the physical domain.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.assert_compatible(other);
        let acc: f64 = Zip::from(&self.coeffs)
            .and(&other.coeffs)
            .fold(0.0, |acc, a, b| acc + (a * b.conj()).re);
        acc * self.grid.area()
    }

    /// L2 norm by trapezoidal quadrature of the physical samples.
    pub fn quadrature_l2(&self) -> f64 {
        let v = self.values();
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let ny = v.ncols();
        let mut acc = 0.0;
        for row in v.rows() {
            for (j, x) in row.iter().enumerate() {
                let w = match self.grid.geometry() {
                    Geometry::Channel2D if j == 0 || j == ny - 1 => 0.5,
                    _ => 1.0,
                };
                acc += w * x * x;
            }
        }
        (acc * dx * dy).sqrt()
    }

    /// Largest coefficient violating the declared parity (0 on the torus).
    pub fn parity_defect(&self) -> f64 {
        if self.parity == Parity::Periodic {
            return 0.0;
        }
        let (nx, my) = self.grid.spectral_shape();
        let sign = if self.parity == Parity::Even { 1.0 } else { -1.0 };
        let mut worst = 0.0f64;
        for i in 0..nx {
            for j in 0..my {
                let mirror = self.coeffs[[i, (my - j) % my]];
                worst = worst.max((self.coeffs[[i, j]] - sign * mirror).norm());
            }
        }
        worst
    }

    /// Largest |f| on the two walls (channel only; 0 on the torus).
    pub fn wall_max(&self) -> f64 {
        if self.grid.geometry() != Geometry::Channel2D {
            return 0.0;
        }
        let v = self.values();
        let top = v.ncols() - 1;
        v.column(0)
            .iter()
            .chain(v.column(top).iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        Self::from_parts(self.grid.clone(), self.parity, self.coeffs.mapv(|c| c * a))
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> ScalarField {
        self.assert_compatible(other);
        let mut coeffs = self.coeffs.clone();
        coeffs.scaled_add(Complex64::new(a, 0.0), &other.coeffs);
        Self::from_parts(self.grid.clone(), self.parity, coeffs)
    }

    /// Apply a per-mode multiplier `m(kx, ky)`.
    pub(crate) fn map_modes(&self, parity: Parity, m: impl Fn(f64, f64) -> Complex64) -> ScalarField {
        let kx = self.grid.kx();
        let ky = self.grid.ky();
        let coeffs = Array2::from_shape_fn(self.coeffs.dim(), |(i, j)| {
            let c = self.coeffs[[i, j]];
            if c == ZERO {
                ZERO
            } else {
                c * m(kx[i] as f64, ky[j] as f64)
            }
        });
        Self::from_parts(self.grid.clone(), parity, coeffs)
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.grid == other.grid
    }

    fn assert_compatible(&self, other: &ScalarField) {
        assert!(self.same_grid(other), "fields live on different grids");
        assert_eq!(self.parity, other.parity, "parity mismatch");
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut Array2<Complex64> {
        self.values = OnceLock::new();
        &mut self.coeffs
    }
}

/// Zero the component of `coeffs` with the wrong y-symmetry.
pub(crate) fn project_parity(grid: &Grid, parity: Parity, coeffs: &mut Array2<Complex64>) {
    if parity == Parity::Periodic {
        return;
    }
    let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
    let (nx, my) = grid.spectral_shape();
    for i in 0..nx {
        for j in 0..=my / 2 {
            let jm = (my - j) % my;
            let a = coeffs[[i, j]];
            let b = coeffs[[i, jm]];
            let sym = 0.5 * (a + sign * b);
            coeffs[[i, j]] = sym;
            coeffs[[i, jm]] = sign * sym;
        }
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, a: f64) -> ScalarField {
        self.scale(a)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

/// Spectral derivative of the given order along `axis`; exact for resolved
/// trigonometric polynomials. Odd-order y-derivatives flip channel parity.
pub fn derivative(f: &ScalarField, axis: Axis, order: u32) -> ScalarField {
    if order == 0 {
        return f.clone();
    }
    let ik = |k: f64| Complex64::new(0.0, k).powu(order);
    match axis {
        Axis::X => f.map_modes(f.parity, |kx, _| ik(kx)),
        Axis::Y => {
            let parity = if order % 2 == 1 { f.parity.flipped() } else { f.parity };
            f.map_modes(parity, |_, ky| ik(ky))
        }
    }
}

/// Alias-free pointwise product: both factors are evaluated on the
/// 3/2-padded grid, multiplied, and truncated back.
pub fn dealiased_product(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    let prod = &f.padded() * &g.padded();
    Ok(ScalarField::from_padded(&f.grid, f.parity.product(g.parity), &prod))
}

/// Two-component velocity field `(u, w)`.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub u: ScalarField,
    pub w: ScalarField,
}

impl VectorField {
    pub fn new(u: ScalarField, w: ScalarField) -> Result<Self> {
        if !u.same_grid(&w) {
            return Err(Error::GridMismatch);
        }
        let (pu, pw) = Parity::velocity(u.grid.geometry());
        if u.parity != pu {
            return Err(Error::ParityMismatch {
                geometry: u.grid.geometry(),
                parity: u.parity,
            });
        }
        if w.parity != pw {
            return Err(Error::ParityMismatch {
                geometry: u.grid.geometry(),
                parity: w.parity,
            });
        }
        Ok(VectorField { u, w })
    }

    pub fn zeros(grid: &Grid) -> Self {
        let (pu, pw) = Parity::velocity(grid.geometry());
        VectorField {
            u: ScalarField::zeros(grid, pu).expect("valid parity"),
            w: ScalarField::zeros(grid, pw).expect("valid parity"),
        }
    }

    pub fn from_fn(
        grid: &Grid,
        u: impl Fn(f64, f64) -> f64,
        w: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let (pu, pw) = Parity::velocity(grid.geometry());
        Self::new(
            ScalarField::from_fn(grid, pu, u)?,
            ScalarField::from_fn(grid, pw, w)?,
        )
    }

    /// Random wall-respecting field with modes up to `band`.
    pub fn random<R: Rng + ?Sized>(grid: &Grid, band: usize, rng: &mut R) -> Result<Self> {
        let (pu, pw) = Parity::velocity(grid.geometry());
        let keep_mean = grid.geometry() == Geometry::Torus2D;
        Self::new(
            ScalarField::random(grid, pu, band, keep_mean, rng)?,
            ScalarField::random(grid, pw, band, keep_mean, rng)?,
        )
    }

    /// `grad phi`.
    pub fn gradient(phi: &ScalarField) -> Self {
        VectorField {
            u: derivative(phi, Axis::X, 1),
            w: derivative(phi, Axis::Y, 1),
        }
    }

    /// `grad^perp psi = (d_y psi, -d_x psi)`, divergence-free by construction.
    pub fn perp_gradient(psi: &ScalarField) -> Self {
        VectorField {
            u: derivative(psi, Axis::Y, 1),
            w: -&derivative(psi, Axis::X, 1),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn divergence(&self) -> ScalarField {
        &derivative(&self.u, Axis::X, 1) + &derivative(&self.w, Axis::Y, 1)
    }

    /// Scalar vorticity `d_x w - d_y u`.
    pub fn curl(&self) -> ScalarField {
        &derivative(&self.w, Axis::X, 1) - &derivative(&self.u, Axis::Y, 1)
    }

    pub fn scale(&self, a: f64) -> Self {
        VectorField {
            u: self.u.scale(a),
            w: self.w.scale(a),
        }
    }

    pub fn axpy(&self, a: f64, other: &VectorField) -> Self {
        VectorField {
            u: self.u.axpy(a, &other.u),
            w: self.w.axpy(a, &other.w),
        }
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        self.u.inner(&other.u) + self.w.inner(&other.w)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.u.weighted_energy(|_| 1.0) + self.w.weighted_energy(|_| 1.0)).sqrt()
    }

    pub fn max_speed(&self) -> f64 {
        let (u, w) = (self.u.values(), self.w.values());
        Zip::from(u)
            .and(w)
            .fold(0.0f64, |m, a, b| m.max((a * a + b * b).sqrt()))
    }

    /// Largest normal velocity on the walls (channel) or 0 (torus).
    pub fn wall_flux_max(&self) -> f64 {
        self.w.wall_max()
    }

    /// Alias-free `a . grad g` for a scalar `g`.
    pub fn advect(&self, g: &ScalarField) -> Result<ScalarField> {
        if !self.u.same_grid(g) {
            return Err(Error::GridMismatch);
        }
        let (u, w) = (self.u.padded(), self.w.padded());
        let gx = derivative(g, Axis::X, 1).padded();
        let gy = derivative(g, Axis::Y, 1).padded();
        let prod = &u * &gx + &w * &gy;
        Ok(ScalarField::from_padded(g.grid(), g.parity, &prod))
    }

    /// Alias-free `self . grad other`.
    pub fn advect_vector(&self, other: &VectorField) -> Result<VectorField> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid();
        let (u, w) = (self.u.padded(), self.w.padded());
        let component = |f: &ScalarField| {
            let fx = derivative(f, Axis::X, 1).padded();
            let fy = derivative(f, Axis::Y, 1).padded();
            let prod = &u * &fx + &w * &fy;
            ScalarField::from_padded(grid, f.parity, &prod)
        };
        Ok(VectorField {
            u: component(&other.u),
            w: component(&other.w),
        })
    }

    pub fn same_grid(&self, other: &VectorField) -> bool {
        self.grid() == other.grid()
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &VectorField {
    type Output = VectorField;
    fn mul(self, a: f64) -> VectorField {
        self.scale(a)
    }
}

impl Neg for &VectorField {
    type Output = VectorField;
    fn neg(self) -> VectorField {
        self.scale(-1.0)
    }
}
