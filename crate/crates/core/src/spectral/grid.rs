use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Computational domain.
///
/// `Torus2D` is the doubly periodic square `[0, 2pi)^2`. `Channel2D` is
/// `[0, 2pi) x [0, pi]`, periodic in x with slip walls at `y = 0` and
/// `y = pi`; fields there carry a cosine (even) or sine (odd) expansion in y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Geometry {
    #[serde(rename = "torus")]
    Torus2D,
    #[serde(rename = "channel")]
    Channel2D,
}

impl Geometry {
    pub fn name(self) -> &'static str {
        match self {
            Geometry::Torus2D => "torus",
            Geometry::Channel2D => "channel",
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus" | "torus2d" => Ok(Geometry::Torus2D),
            "channel" | "channel2d" => Ok(Geometry::Channel2D),
            other => Err(Error::Config(format!("unknown geometry `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

struct Plans {
    x_fwd: Arc<dyn Fft<f64>>,
    x_inv: Arc<dyn Fft<f64>>,
    y_fwd: Arc<dyn Fft<f64>>,
    y_inv: Arc<dyn Fft<f64>>,
    px_fwd: Arc<dyn Fft<f64>>,
    px_inv: Arc<dyn Fft<f64>>,
    py_fwd: Arc<dyn Fft<f64>>,
    py_inv: Arc<dyn Fft<f64>>,
}

struct GridInner {
    geometry: Geometry,
    nx: usize,
    ny: usize,
    /// Number of periodic samples in y (the channel is stored through its
    /// even/odd extension onto `[0, 2pi)`).
    my: usize,
    kx: Vec<i64>,
    ky: Vec<i64>,
    plans: Plans,
}

/// A uniform grid with its FFT plans and integer wavenumber tables.
///
/// Cloning is cheap; clones share plans. Plans are `Sync`, so a grid can be
/// used from several threads at once.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("geometry", &self.inner.geometry)
            .field("nx", &self.inner.nx)
            .field("ny", &self.inner.ny)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.geometry == other.inner.geometry
                && self.inner.nx == other.inner.nx
                && self.inner.ny == other.inner.ny)
    }
}

fn fft_freqs(n: usize) -> Vec<i64> {
    (0..n)
        .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
        .collect()
}

/// Position of wavenumber `k` in an FFT array of length `n`.
#[inline]
pub(crate) fn slot(k: i64, n: usize) -> usize {
    if k >= 0 {
        k as usize
    } else {
        (n as i64 + k) as usize
    }
}

/// Build a grid. For `Torus2D`, `ny` is the number of samples on `[0, 2pi)`;
/// for `Channel2D` it is the number of half-range modes, i.e. the wall-to-wall
/// interval `[0, pi]` is split into `ny` cells.
pub fn make_grid(geometry: Geometry, nx: usize, ny: usize) -> Result<Grid> {
    Grid::new(geometry, nx, ny)
}

impl Grid {
    pub fn new(geometry: Geometry, nx: usize, ny: usize) -> Result<Self> {
        if nx < 8 || ny < 8 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::InvalidResolution { nx, ny });
        }
        let my = match geometry {
            Geometry::Torus2D => ny,
            Geometry::Channel2D => 2 * ny,
        };
        let (px, py) = (3 * nx / 2, 3 * my / 2);
        let mut planner = FftPlanner::new();
        let plans = Plans {
            x_fwd: planner.plan_fft_forward(nx),
            x_inv: planner.plan_fft_inverse(nx),
            y_fwd: planner.plan_fft_forward(my),
            y_inv: planner.plan_fft_inverse(my),
            px_fwd: planner.plan_fft_forward(px),
            px_inv: planner.plan_fft_inverse(px),
            py_fwd: planner.plan_fft_forward(py),
            py_inv: planner.plan_fft_inverse(py),
        };
        Ok(Grid {
            inner: Arc::new(GridInner {
                geometry,
                nx,
                ny,
                my,
                kx: fft_freqs(nx),
                ky: fft_freqs(my),
                plans,
            }),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.inner.geometry
    }

    pub fn nx(&self) -> usize {
        self.inner.nx
    }

    pub fn ny(&self) -> usize {
        self.inner.ny
    }

    /// Periodic sample count in y used by the transforms.
    pub fn periodic_ny(&self) -> usize {
        self.inner.my
    }

    /// Spectral array shape `(nx, periodic_ny)`.
    pub fn spectral_shape(&self) -> (usize, usize) {
        (self.inner.nx, self.inner.my)
    }

    /// Shape of physical value arrays: `nx x ny` on the torus and
    /// `nx x (ny + 1)` on the channel (both walls included).
    pub fn physical_shape(&self) -> (usize, usize) {
        match self.geometry() {
            Geometry::Torus2D => (self.inner.nx, self.inner.ny),
            Geometry::Channel2D => (self.inner.nx, self.inner.ny + 1),
        }
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (3 * self.inner.nx / 2, 3 * self.inner.my / 2)
    }

    /// Integer wavenumbers along x in FFT order.
    pub fn kx(&self) -> &[i64] {
        &self.inner.kx
    }

    /// Integer wavenumbers along y in FFT order (of the periodic extension
    /// for the channel).
    pub fn ky(&self) -> &[i64] {
        &self.inner.ky
    }

    /// Distinct y mode indices: the full signed table on the torus, `0..=ny`
    /// cosine/sine indices on the channel.
    pub fn y_modes(&self) -> Vec<i64> {
        match self.geometry() {
            Geometry::Torus2D => self.inner.ky.clone(),
            Geometry::Channel2D => (0..=self.inner.ny as i64).collect(),
        }
    }

    pub fn lx(&self) -> f64 {
        2.0 * PI
    }

    pub fn ly(&self) -> f64 {
        match self.geometry() {
            Geometry::Torus2D => 2.0 * PI,
            Geometry::Channel2D => PI,
        }
    }

    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }

    pub fn dx(&self) -> f64 {
        self.lx() / self.inner.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * PI / self.inner.my as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx().min(self.dy())
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.inner.nx).map(|i| i as f64 * self.dx()).collect()
    }

    /// y coordinates of the physical sample rows.
    pub fn y_coords(&self) -> Vec<f64> {
        let n = self.physical_shape().1;
        (0..n).map(|j| j as f64 * self.dy()).collect()
    }

    /// `|k|^2` for the spectral slot `(i, j)`.
    #[inline]
    pub(crate) fn k2(&self, i: usize, j: usize) -> f64 {
        let kx = self.inner.kx[i] as f64;
        let ky = self.inner.ky[j] as f64;
        kx * kx + ky * ky
    }

    /// Forward transform of periodic samples (`nx x periodic_ny`),
    /// normalized so that `f(x) = sum_k c_k exp(i k.x)`. Nyquist slots are
    /// cleared.
    pub(crate) fn forward(&self, values: &Array2<f64>) -> Array2<Complex64> {
        let mut data = values.mapv(|v| Complex64::new(v, 0.0));
        let p = &self.inner.plans;
        fft2(&mut data, &p.x_fwd, &p.y_fwd);
        let scale = 1.0 / (self.inner.nx * self.inner.my) as f64;
        data.mapv_inplace(|c| c * scale);
        self.clear_nyquist(&mut data);
        data
    }

    /// Periodic samples from coefficients.
    pub(crate) fn inverse(&self, coeffs: &Array2<Complex64>) -> Array2<f64> {
        let mut data = coeffs.clone();
        let p = &self.inner.plans;
        fft2(&mut data, &p.x_inv, &p.y_inv);
        data.mapv(|c| c.re)
    }

    /// Samples on the 3/2-refined grid (used for alias-free products).
    pub(crate) fn to_padded(&self, coeffs: &Array2<Complex64>) -> Array2<f64> {
        let (px, py) = self.padded_shape();
        let mut data = Array2::<Complex64>::zeros((px, py));
        for (i, &kx) in self.inner.kx.iter().enumerate() {
            if i == self.inner.nx / 2 {
                continue;
            }
            let pi = slot(kx, px);
            for (j, &ky) in self.inner.ky.iter().enumerate() {
                if j == self.inner.my / 2 {
                    continue;
                }
                data[[pi, slot(ky, py)]] = coeffs[[i, j]];
            }
        }
        let p = &self.inner.plans;
        fft2(&mut data, &p.px_inv, &p.py_inv);
        data.mapv(|c| c.re)
    }

    /// Coefficients (truncated to this grid) of samples on the padded grid.
    pub(crate) fn truncate_padded(&self, values: &Array2<f64>) -> Array2<Complex64> {
        let (px, py) = self.padded_shape();
        let mut data = values.mapv(|v| Complex64::new(v, 0.0));
        let p = &self.inner.plans;
        fft2(&mut data, &p.px_fwd, &p.py_fwd);
        let scale = 1.0 / (px * py) as f64;
        let mut out = Array2::<Complex64>::zeros(self.spectral_shape());
        for (i, &kx) in self.inner.kx.iter().enumerate() {
            if i == self.inner.nx / 2 {
                continue;
            }
            let pi = slot(kx, px);
            for (j, &ky) in self.inner.ky.iter().enumerate() {
                if j == self.inner.my / 2 {
                    continue;
                }
                out[[i, j]] = data[[pi, slot(ky, py)]] * scale;
            }
        }
        out
    }

    pub(crate) fn clear_nyquist(&self, coeffs: &mut Array2<Complex64>) {
        let (nx, my) = (self.inner.nx, self.inner.my);
        coeffs.row_mut(nx / 2).fill(Complex64::new(0.0, 0.0));
        coeffs.column_mut(my / 2).fill(Complex64::new(0.0, 0.0));
    }
}

/// In-place 2D transform: `y_plan` along the contiguous axis, `x_plan`
/// across rows (through a transposed copy).
fn fft2(data: &mut Array2<Complex64>, x_plan: &Arc<dyn Fft<f64>>, y_plan: &Arc<dyn Fft<f64>>) {
    let (nr, nc) = data.dim();
    debug_assert_eq!(x_plan.len(), nr);
    debug_assert_eq!(y_plan.len(), nc);
    if !data.is_standard_layout() {
        *data = data.as_standard_layout().to_owned();
    }
    let mut scratch =
        vec![Complex64::new(0.0, 0.0); y_plan.get_inplace_scratch_len().max(x_plan.get_inplace_scratch_len())];
    y_plan.process_with_scratch(
        data.as_slice_mut().expect("standard layout"),
        &mut scratch,
    );
    let mut t = data.view().reversed_axes().as_standard_layout().to_owned();
    x_plan.process_with_scratch(t.as_slice_mut().expect("standard layout"), &mut scratch);
    data.assign(&t.view().reversed_axes());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_wavenumbers_cover_signed_range() {
        let g = make_grid(Geometry::Torus2D, 64, 64).unwrap();
        let mut kx = g.kx().to_vec();
        kx.sort_unstable();
        assert_eq!(kx, (-32..=31).collect::<Vec<_>>());
        assert_eq!(g.physical_shape(), (64, 64));
    }

    #[test]
    fn channel_has_half_range_y_modes() {
        let g = make_grid(Geometry::Channel2D, 64, 32).unwrap();
        assert_eq!(g.y_modes(), (0..=32).collect::<Vec<_>>());
        assert_eq!(g.physical_shape(), (64, 33));
        assert_eq!(g.spectral_shape(), (64, 64));
        assert!((g.ly() - PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_odd_or_small_resolutions() {
        assert!(matches!(
            make_grid(Geometry::Torus2D, 7, 8),
            Err(Error::InvalidResolution { nx: 7, ny: 8 })
        ));
        assert!(make_grid(Geometry::Torus2D, 6, 8).is_err());
        assert!(make_grid(Geometry::Channel2D, 16, 9).is_err());
    }

    #[test]
    fn grids_compare_by_shape() {
        let a = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let b = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let c = make_grid(Geometry::Channel2D, 16, 16).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
