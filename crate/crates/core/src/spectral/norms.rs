use super::{ScalarField, VectorField};

/// Highest supported Sobolev order.
pub const MAX_SOBOLEV_ORDER: u32 = 6;

/// Fourier-multiplier Sobolev norm
/// `(area * sum_k (1 + |k|^2)^s |f_k|^2)^(1/2)`.
pub trait SobolevNorm {
    /// Squared norm. Panics if `s > MAX_SOBOLEV_ORDER`.
    fn sobolev_norm_sq(&self, s: u32) -> f64;

    fn sobolev_norm(&self, s: u32) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }
}

fn check_order(s: u32) {
    assert!(
        s <= MAX_SOBOLEV_ORDER,
        "Sobolev order {s} exceeds {MAX_SOBOLEV_ORDER}"
    );
}

impl SobolevNorm for ScalarField {
    fn sobolev_norm_sq(&self, s: u32) -> f64 {
        check_order(s);
        self.weighted_energy(|k2| (1.0 + k2).powi(s as i32))
    }
}

impl SobolevNorm for VectorField {
    fn sobolev_norm_sq(&self, s: u32) -> f64 {
        self.u.sobolev_norm_sq(s) + self.w.sobolev_norm_sq(s)
    }
}

/// A density/velocity pair such as `(rho, v)` or `L(rho, v)`.
impl SobolevNorm for (ScalarField, VectorField) {
    fn sobolev_norm_sq(&self, s: u32) -> f64 {
        self.0.sobolev_norm_sq(s) + self.1.sobolev_norm_sq(s)
    }
}

impl<T: SobolevNorm + ?Sized> SobolevNorm for &T {
    fn sobolev_norm_sq(&self, s: u32) -> f64 {
        (**self).sobolev_norm_sq(s)
    }
}

pub fn sobolev_norm<T: SobolevNorm + ?Sized>(f: &T, s: u32) -> f64 {
    f.sobolev_norm(s)
}
