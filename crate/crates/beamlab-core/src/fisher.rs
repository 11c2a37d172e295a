//! Noiseless observation model, Fisher information matrices in spherical and
//! Cartesian parameters, and the position error bound (PEB).
//!
//! The parameter vector is `[rho, theta, phi, alpha_r, alpha_i]` in spherical
//! form and `[x, y, z, alpha_r, alpha_i]` in Cartesian form, with `alpha` the
//! complex cascaded channel gain. The observation over `T` transmissions is
//! `y = sqrt(E_s) alpha F^T a(p_ue) + n`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::Error;
use crate::geometry::{
    jacobian_sph_wrt_cart, steering_derivatives, steering_vector, CartesianPoint, RisArray,
};
use crate::linalg::{CondDiagnostics, Mat5};
use crate::Result;

const PI: f64 = core::f64::consts::PI;

/// Condition-number ceiling beyond which an information matrix is treated as
/// singular rather than inverted.
pub const FIM_CONDITION_LIMIT: f64 = 1e12;

/// Narrowband pilot signal and noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_watts: f64,
    pub noise_psd_w_per_hz: f64,
    pub noise_figure_db: f64,
    pub num_transmissions: usize,
}

impl SignalConfig {
    pub fn new(
        carrier_hz: f64,
        bandwidth_hz: f64,
        tx_power_watts: f64,
        noise_psd_w_per_hz: f64,
        noise_figure_db: f64,
        num_transmissions: usize,
    ) -> Result<Self> {
        let cfg = Self {
            carrier_hz,
            bandwidth_hz,
            tx_power_watts,
            noise_psd_w_per_hz,
            noise_figure_db,
            num_transmissions,
        };
        if !(carrier_hz > 0.0 && bandwidth_hz > 0.0 && tx_power_watts > 0.0
            && noise_psd_w_per_hz > 0.0)
            || num_transmissions == 0
        {
            return Err(Error::InvalidParameter("signal parameters must be positive"));
        }
        Ok(cfg)
    }

    /// The canonical narrowband setup: 120 kHz bandwidth, 20 dBm transmit
    /// power, -174 dBm/Hz noise density, 8 dB noise figure, 40 transmissions.
    pub fn narrowband_default(carrier_hz: f64) -> Self {
        Self {
            carrier_hz,
            bandwidth_hz: 120e3,
            tx_power_watts: dbm_to_watts(20.0),
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            noise_figure_db: 8.0,
            num_transmissions: 40,
        }
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Pilot energy per channel use, `E_s = P_tx / W`.
    pub fn energy_per_use(&self) -> f64 {
        self.tx_power_watts / self.bandwidth_hz
    }

    /// Noise density including the receiver noise figure.
    pub fn effective_noise_psd(&self) -> f64 {
        self.noise_psd_w_per_hz * libm::pow(10.0, self.noise_figure_db / 10.0)
    }

    /// The factor `2 E_s / N0_eff` in front of the information matrix.
    pub fn snr_scale(&self) -> f64 {
        2.0 * self.energy_per_use() / self.effective_noise_psd()
    }

    /// Total energy budget `E_s * M * T` for an `m`-element surface.
    pub fn total_energy(&self, m: usize) -> f64 {
        self.energy_per_use() * m as f64 * self.num_transmissions as f64
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * libm::pow(10.0, dbm / 10.0)
}

/// How the free-space magnitude of the cascaded gain treats the carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainMode {
    /// Magnitude uses the actual carrier wavelength.
    PerCarrier,
    /// Magnitude is pinned to a reference carrier so runs at different
    /// carriers see identical propagation loss; the phase still uses the
    /// actual wavelength.
    FairPinned { reference_hz: f64 },
}

/// Cascaded two-hop gain: `|alpha| = lambda^2 / ((4 pi)^2 d1 d2)` with phase
/// `-2 pi (d1 + d2) / lambda`.
pub fn channel_gain(
    p_bs: &CartesianPoint,
    p_ris: &CartesianPoint,
    p_ue: &CartesianPoint,
    carrier_hz: f64,
    mode: GainMode,
) -> Result<Complex64> {
    if !(carrier_hz > 0.0) {
        return Err(Error::InvalidParameter("carrier must be positive"));
    }
    let d1 = p_bs.sub(p_ris).norm();
    let d2 = p_ue.sub(p_ris).norm();
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::DegeneratePoint);
    }
    let lambda = crate::SPEED_OF_LIGHT / carrier_hz;
    let lambda_mag = match mode {
        GainMode::PerCarrier => lambda,
        GainMode::FairPinned { reference_hz } => {
            if !(reference_hz > 0.0) {
                return Err(Error::InvalidParameter("reference carrier must be positive"));
            }
            crate::SPEED_OF_LIGHT / reference_hz
        }
    };
    let mag = lambda_mag * lambda_mag / ((4.0 * PI) * (4.0 * PI) * d1 * d2);
    let phase = -2.0 * PI / lambda * (d1 + d2);
    Ok(Complex64::new(mag * libm::cos(phase), mag * libm::sin(phase)))
}

/// Channel realization entering the observation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub alpha: Complex64,
    pub p_ue: CartesianPoint,
    pub p_bs: CartesianPoint,
}

impl ChannelState {
    pub fn new(alpha: Complex64, p_ue: CartesianPoint, p_bs: CartesianPoint) -> Result<Self> {
        if alpha.norm() == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be nonzero and finite"));
        }
        Ok(Self { alpha, p_ue, p_bs })
    }
}

/// A precoding matrix `F = [f_1 .. f_T]`, one column per transmission,
/// together with the design that produced it and its power `tr(F F^H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    columns: Vec<Vec<Complex64>>,
    provenance: String,
    power: f64,
}

impl Precoder {
    pub fn new(columns: Vec<Vec<Complex64>>, provenance: &str) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("precoder needs at least one column"));
        }
        let m = columns[0].len();
        if m == 0 {
            return Err(Error::InvalidParameter("precoder columns must be nonempty"));
        }
        let mut power = 0.0;
        for c in &columns {
            if c.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: c.len() });
            }
            power += c.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        Ok(Self { columns, provenance: provenance.to_string(), power })
    }

    pub fn columns(&self) -> &[Vec<Complex64>] {
        &self.columns
    }

    pub fn num_transmissions(&self) -> usize {
        self.columns.len()
    }

    pub fn num_elements(&self) -> usize {
        self.columns[0].len()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// `tr(F F^H)`, recorded at construction.
    pub fn power(&self) -> f64 {
        self.power
    }
}

/// Noiseless observation `mu = alpha F^T a(p_ue)` and its `T x 5` partials
/// `[d/drho, d/dtheta, d/dphi, d/dalpha_r, d/dalpha_i]` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MuDerivatives {
    pub mu: Vec<Complex64>,
    pub partials: [Vec<Complex64>; 5],
}

pub fn mu_and_derivatives(
    array: &RisArray,
    precoder: &Precoder,
    channel: &ChannelState,
) -> Result<MuDerivatives> {
    if precoder.num_elements() != array.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: array.num_elements(),
            got: precoder.num_elements(),
        });
    }
    let a = steering_vector(array, &channel.p_ue)?;
    let d = steering_derivatives(array, &channel.p_ue)?;
    let alpha = channel.alpha;
    let t = precoder.num_transmissions();
    let mut mu = Vec::with_capacity(t);
    let mut partials: [Vec<Complex64>; 5] = core::array::from_fn(|_| Vec::with_capacity(t));
    for f in precoder.columns() {
        let dot = |v: &[Complex64]| -> Complex64 { f.iter().zip(v).map(|(x, y)| x * y).sum() };
        let fa = dot(&a);
        mu.push(alpha * fa);
        partials[0].push(alpha * dot(&d.d_rho));
        partials[1].push(alpha * dot(&d.d_theta));
        partials[2].push(alpha * dot(&d.d_phi));
        partials[3].push(fa);
        partials[4].push(Complex64::new(0.0, 1.0) * fa);
    }
    Ok(MuDerivatives { mu, partials })
}

/// Fisher information in spherical parameters,
/// `J = (2 E_s / N0_eff) Re{ (d mu)^H (d mu) }`.
pub fn fim_spherical(d_mu: &MuDerivatives, config: &SignalConfig) -> Mat5 {
    let s = config.snr_scale();
    let mut j = Mat5::zeros();
    for i in 0..5 {
        for k in i..5 {
            let mut acc = 0.0;
            for (a, b) in d_mu.partials[i].iter().zip(&d_mu.partials[k]) {
                acc += (a.conj() * b).re;
            }
            j.0[i][k] = s * acc;
            j.0[k][i] = s * acc;
        }
    }
    j
}

/// Fisher information in Cartesian parameters, `J_car = C^T J_sph C` with
/// `C` the Jacobian of the spherical parameters.
pub fn fim_cartesian(fim_sph: &Mat5, jacobian: &Mat5) -> Mat5 {
    fim_sph.congruence(jacobian)
}

/// Position error bound: the square root of the trace of the position block
/// of the inverse Cartesian information matrix.
///
/// The matrix is equilibrated by its own diagonal before the condition check
/// so the limit reflects information geometry rather than parameter units.
pub fn peb(fim_car: &Mat5) -> Result<f64> {
    peb_with_scale(fim_car, &fim_car.diagonal())
}

/// [`peb`] with an explicit equilibration scale, used when a better notion of
/// the achievable information per coordinate is available than the matrix's
/// own diagonal (for instance near the boundary of an allocation simplex).
pub fn peb_with_scale(fim_car: &Mat5, scale: &[f64; 5]) -> Result<f64> {
    let (inv, _) = fim_car.spd_inverse_equilibrated(scale, FIM_CONDITION_LIMIT)?;
    Ok(libm::sqrt(inv.0[0][0] + inv.0[1][1] + inv.0[2][2]))
}

/// End-to-end report: both information matrices, conditioning diagnostics and
/// the bound itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PebReport {
    pub fim_spherical: Mat5,
    pub fim_cartesian: Mat5,
    pub condition: CondDiagnostics,
    pub peb_meters: f64,
}

/// Computes the PEB of a precoder for a given channel and signal setup.
pub fn peb_report(
    array: &RisArray,
    precoder: &Precoder,
    channel: &ChannelState,
    config: &SignalConfig,
) -> Result<PebReport> {
    let d_mu = mu_and_derivatives(array, precoder, channel)?;
    let j_sph = fim_spherical(&d_mu, config);
    let c = jacobian_sph_wrt_cart(&channel.p_ue)?;
    let j_car = fim_cartesian(&j_sph, &c);
    let (inv, condition) =
        j_car.spd_inverse_equilibrated(&j_car.diagonal(), FIM_CONDITION_LIMIT)?;
    let peb_meters = libm::sqrt(inv.0[0][0] + inv.0[1][1] + inv.0[2][2]);
    Ok(PebReport { fim_spherical: j_sph, fim_cartesian: j_car, condition, peb_meters })
}
