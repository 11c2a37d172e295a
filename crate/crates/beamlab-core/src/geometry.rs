//! Array geometry, coordinate conversions, near-field steering vectors and
//! their derivatives with respect to spherical coordinates.
//!
//! Conventions: the RIS is a uniform rectangular grid in the x-z plane,
//! centered at the origin, with boresight along +y. Spherical coordinates are
//! `rho` (range), `theta` (azimuth, measured from +x in the x-y plane) and
//! `phi` (polar angle from +z), both restricted to the open interval
//! `(0, pi)` so that valid points lie strictly in front of the surface:
//!
//! ```text
//! x = rho sin(phi) cos(theta)
//! y = rho sin(phi) sin(theta)
//! z = rho cos(phi)
//! ```

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::Error;
use crate::linalg::Mat5;
use crate::Result;

/// Points closer than this (in radians) to `phi = 0` or `phi = pi` are
/// rejected rather than regularized.
pub const POLAR_AXIS_TOL: f64 = 1e-9;

const PI: f64 = core::f64::consts::PI;

/// Position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CartesianPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const ORIGIN: CartesianPoint = CartesianPoint::new(0.0, 0.0, 0.0);

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn dot(&self, other: &CartesianPoint) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn sub(&self, other: &CartesianPoint) -> CartesianPoint {
        CartesianPoint::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &CartesianPoint) -> CartesianPoint {
        CartesianPoint::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scaled(&self, s: f64) -> CartesianPoint {
        CartesianPoint::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Position in spherical coordinates relative to the RIS center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    /// Range in meters, positive.
    pub rho: f64,
    /// Azimuth in radians, open interval `(0, pi)`.
    pub theta: f64,
    /// Polar angle in radians, open interval `(0, pi)`.
    pub phi: f64,
}

impl SphericalPoint {
    pub fn new(rho: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter("rho must be positive and finite"));
        }
        if !(theta > 0.0 && theta < PI) {
            return Err(Error::InvalidParameter("theta must lie in (0, pi)"));
        }
        if !(phi > 0.0 && phi < PI) {
            return Err(Error::InvalidParameter("phi must lie in (0, pi)"));
        }
        Ok(Self { rho, theta, phi })
    }
}

/// Converts a Cartesian point to spherical coordinates.
///
/// Rejects the origin, points on (or within [`POLAR_AXIS_TOL`] of) the polar
/// axis, and points not strictly in front of the surface (`y <= 0`).
pub fn cart_to_sph(p: &CartesianPoint) -> Result<SphericalPoint> {
    let rho = p.norm();
    if !(rho > 0.0) || !p.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let phi = libm::acos(p.z / rho);
    if phi < POLAR_AXIS_TOL || phi > PI - POLAR_AXIS_TOL {
        return Err(Error::PolarAxis);
    }
    let theta = libm::atan2(p.y, p.x);
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::InvalidParameter("point is co-planar with or behind the RIS"));
    }
    Ok(SphericalPoint { rho, theta, phi })
}

/// Converts spherical coordinates back to a Cartesian point.
pub fn sph_to_cart(s: &SphericalPoint) -> CartesianPoint {
    let sin_phi = libm::sin(s.phi);
    CartesianPoint::new(
        s.rho * sin_phi * libm::cos(s.theta),
        s.rho * sin_phi * libm::sin(s.theta),
        s.rho * libm::cos(s.phi),
    )
}

/// Planar RIS: a `rows x cols` grid of elements in the x-z plane, centered at
/// the origin, with uniform spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct RisArray {
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
    element_positions: Vec<CartesianPoint>,
}

impl RisArray {
    pub fn new(rows: usize, cols: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("element counts must be positive"));
        }
        if !(spacing > 0.0) || !(wavelength > 0.0) {
            return Err(Error::InvalidParameter("spacing and wavelength must be positive"));
        }
        let mut element_positions = Vec::with_capacity(rows * cols);
        let x0 = (cols as f64 - 1.0) / 2.0;
        let z0 = (rows as f64 - 1.0) / 2.0;
        for r in 0..rows {
            for c in 0..cols {
                element_positions.push(CartesianPoint::new(
                    (c as f64 - x0) * spacing,
                    0.0,
                    (r as f64 - z0) * spacing,
                ));
            }
        }
        Ok(Self { rows, cols, spacing, wavelength, element_positions })
    }

    /// Grid with the conventional half-wavelength spacing.
    pub fn half_wavelength(rows: usize, cols: usize, wavelength: f64) -> Result<Self> {
        Self::new(rows, cols, wavelength / 2.0, wavelength)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of elements `M = rows * cols`.
    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn element_positions(&self) -> &[CartesianPoint] {
        &self.element_positions
    }

    /// The array center, which is the coordinate origin.
    pub fn center(&self) -> CartesianPoint {
        CartesianPoint::ORIGIN
    }

    /// Largest element distance from the center (half the diagonal).
    pub fn max_element_radius(&self) -> f64 {
        self.element_positions.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Per-element path-length difference `|p - p_m| - |p|`, evaluated in a form
/// that avoids cancellation when `|p|` is much larger than the aperture.
fn path_delta(p: &CartesianPoint, p_m: &CartesianPoint, rho: f64, d_m: f64) -> f64 {
    (p_m.dot(p_m) - 2.0 * p.dot(p_m)) / (d_m + rho)
}

/// Near-field steering vector: entry `m` is
/// `exp(-j 2 pi / lambda (|p - p_m| - |p - center|))`.
///
/// All entries are unit modulus; a hypothetical element at the center would
/// contribute exactly `1`.
pub fn steering_vector(array: &RisArray, p: &CartesianPoint) -> Result<Vec<Complex64>> {
    let rho = p.norm();
    if !(rho > 0.0) || !p.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let k = array.wavenumber();
    let mut out = Vec::with_capacity(array.num_elements());
    for (m, p_m) in array.element_positions().iter().enumerate() {
        let d_m = p.sub(p_m).norm();
        if d_m <= 1e-12 * array.wavelength() {
            return Err(Error::SingularGeometry(m));
        }
        let phase = -k * path_delta(p, p_m, rho, d_m);
        out.push(Complex64::new(libm::cos(phase), libm::sin(phase)));
    }
    Ok(out)
}

/// Partial derivatives of the steering vector with respect to the spherical
/// coordinates of `p`, holding the other two fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDerivatives {
    pub d_rho: Vec<Complex64>,
    pub d_theta: Vec<Complex64>,
    pub d_phi: Vec<Complex64>,
}

/// Analytic derivatives of [`steering_vector`] at `p`.
///
/// Writing the entry phase as `-k (|p - p_m| - rho)`, the chain rule gives
/// `da/dx = a . (-jk) (u_m . dp/dx - drho/dx)` with `u_m` the unit vector
/// from element `m` to `p`.
pub fn steering_derivatives(array: &RisArray, p: &CartesianPoint) -> Result<SteeringDerivatives> {
    let a = steering_vector(array, p)?;
    let s = cart_to_sph(p)?;
    let rho = s.rho;
    let (sin_t, cos_t) = (libm::sin(s.theta), libm::cos(s.theta));
    let (sin_p, cos_p) = (libm::sin(s.phi), libm::cos(s.phi));
    // tangent vectors dp/dtheta and dp/dphi; both are orthogonal to p
    let t_theta = CartesianPoint::new(-rho * sin_p * sin_t, rho * sin_p * cos_t, 0.0);
    let t_phi = CartesianPoint::new(rho * cos_p * cos_t, rho * cos_p * sin_t, -rho * sin_p);
    let k = array.wavenumber();
    let m = array.num_elements();
    let mut d_rho = Vec::with_capacity(m);
    let mut d_theta = Vec::with_capacity(m);
    let mut d_phi = Vec::with_capacity(m);
    for (am, p_m) in a.iter().zip(array.element_positions()) {
        let w = p.sub(p_m);
        let d = w.norm();
        // u_m . p_hat - 1 = -|w - d p_hat|^2 / (2 d^2), cancellation-free
        let wp = w.sub(&p.scaled(d / rho));
        let radial = -wp.dot(&wp) / (2.0 * d * d);
        // p . t = 0 exactly, so u_m . t = -(p_m . t) / d
        let tang_t = -p_m.dot(&t_theta) / d;
        let tang_p = -p_m.dot(&t_phi) / d;
        let jk = Complex64::new(0.0, -k);
        d_rho.push(am * jk * radial);
        d_theta.push(am * jk * tang_t);
        d_phi.push(am * jk * tang_p);
    }
    Ok(SteeringDerivatives { d_rho, d_theta, d_phi })
}

/// Jacobian of the spherical parameter vector `[rho, theta, phi, a_r, a_i]`
/// with respect to the Cartesian one `[x, y, z, a_r, a_i]`.
///
/// The gain parameters map to themselves, so the lower-right block is the
/// identity and the off-diagonal blocks vanish.
pub fn jacobian_sph_wrt_cart(p: &CartesianPoint) -> Result<Mat5> {
    let rho = p.norm();
    if !(rho > 0.0) || !p.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let rxy = libm::hypot(p.x, p.y);
    if rxy <= rho * POLAR_AXIS_TOL {
        return Err(Error::PolarAxis);
    }
    let mut c = Mat5::zeros();
    c.0[0][0] = p.x / rho;
    c.0[0][1] = p.y / rho;
    c.0[0][2] = p.z / rho;
    c.0[1][0] = -p.y / (rxy * rxy);
    c.0[1][1] = p.x / (rxy * rxy);
    c.0[2][0] = p.x * p.z / (rho * rho * rxy);
    c.0[2][1] = p.y * p.z / (rho * rho * rxy);
    c.0[2][2] = -rxy / (rho * rho);
    c.0[3][3] = 1.0;
    c.0[4][4] = 1.0;
    Ok(c)
}
