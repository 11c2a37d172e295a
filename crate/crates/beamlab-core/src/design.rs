//! RIS profile designs for localization: random, directional with an
//! uncertainty sphere, and localization-optimal, each realized as a
//! T-transmission precoder in unconstrained or table-constrained variants.
//!
//! The localization-optimal design spans the steering vector and its three
//! spherical derivatives at the (prior) UE position. After Gram-Schmidt
//! orthonormalization the power constraint reduces to a 4-point simplex over
//! relative beam powers, and the bound is minimized over that simplex by
//! projected gradient descent. Continuous powers are realized by time
//! sharing: each beam transmits for an integer number of the T slots.

use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::fisher::{
    fim_cartesian, fim_spherical, mu_and_derivatives, ChannelState, Precoder, SignalConfig,
    FIM_CONDITION_LIMIT,
};
use crate::geometry::{
    jacobian_sph_wrt_cart, steering_derivatives, steering_vector, CartesianPoint, RisArray,
};
use crate::hardware::{project_profile, LookupTable};
use crate::linalg::{largest_remainder, project_simplex, CMatrix, Mat5};
use crate::synthesis::combined_response_b;
use crate::Result;

/// Number of beams in the localization-optimal basis.
pub const NUM_BEAMS: usize = 4;

/// The seedable generator used for Monte-Carlo trials.
pub type TrialRng = ChaCha8Rng;

/// Deterministic per-trial random stream: all trials share one seed and
/// differ only in the stream index.
pub fn trial_rng(seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// The four-beam basis at a UE position: conjugated steering vector and its
/// three conjugated spherical derivatives, raw and orthonormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamBasis {
    u: CMatrix,
    u_ortho: CMatrix,
}

impl BeamBasis {
    /// Raw basis `[a*, da*/drho, da*/dtheta, da*/dphi]`, one column per beam.
    pub fn raw(&self) -> &CMatrix {
        &self.u
    }

    /// Orthonormalized basis with `U^H U = M I_4`.
    pub fn orthonormal(&self) -> &CMatrix {
        &self.u_ortho
    }

    pub fn num_elements(&self) -> usize {
        self.u.rows()
    }

    pub fn beam(&self, k: usize) -> Vec<Complex64> {
        self.u_ortho.column(k)
    }
}

/// Builds the beam basis at `p_ue` with two-pass modified Gram-Schmidt and
/// per-column renormalization to squared norm `M`.
pub fn build_beam_basis(array: &RisArray, p_ue: &CartesianPoint) -> Result<BeamBasis> {
    let a = steering_vector(array, p_ue)?;
    let d = steering_derivatives(array, p_ue)?;
    let m = array.num_elements();
    let cols: [Vec<Complex64>; NUM_BEAMS] = [
        a.iter().map(|z| z.conj()).collect(),
        d.d_rho.iter().map(|z| z.conj()).collect(),
        d.d_theta.iter().map(|z| z.conj()).collect(),
        d.d_phi.iter().map(|z| z.conj()).collect(),
    ];
    let mut u = CMatrix::zeros(m, NUM_BEAMS);
    for (k, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            u.set(i, k, *v);
        }
    }
    let sqrt_m = libm::sqrt(m as f64);
    let mut ortho: Vec<Vec<Complex64>> = Vec::with_capacity(NUM_BEAMS);
    for col in &cols {
        let scale_in = crate::linalg::norm(col);
        let mut v = col.clone();
        for _pass in 0..2 {
            for q in ortho.iter() {
                // q has squared norm M, so the projection divides by M
                let coeff = crate::linalg::cdot(q, &v) / m as f64;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= coeff * qi;
                }
            }
        }
        let nv = crate::linalg::norm(&v);
        if nv <= 1e-8 * f64::max(scale_in, f64::MIN_POSITIVE) {
            return Err(Error::DegenerateBasis);
        }
        let s = sqrt_m / nv;
        for vi in &mut v {
            *vi *= s;
        }
        ortho.push(v);
    }
    let mut u_ortho = CMatrix::zeros(m, NUM_BEAMS);
    for (k, col) in ortho.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            u_ortho.set(i, k, *v);
        }
    }
    Ok(BeamBasis { u, u_ortho })
}

/// Cartesian information matrix of a single transmission of each
/// orthonormalized beam. The combined information of an allocation is
/// `sum_k lambda_k J_k` by additivity over transmissions.
pub fn per_beam_fims(
    basis: &BeamBasis,
    array: &RisArray,
    channel: &ChannelState,
    config: &SignalConfig,
) -> Result<[Mat5; NUM_BEAMS]> {
    let jac = jacobian_sph_wrt_cart(&channel.p_ue)?;
    let mut out = [Mat5::zeros(); NUM_BEAMS];
    for (k, slot) in out.iter_mut().enumerate() {
        let precoder = Precoder::new(alloc::vec![basis.beam(k)], "beam")?;
        let d = mu_and_derivatives(array, &precoder, channel)?;
        *slot = fim_cartesian(&fim_spherical(&d, config), &jac);
    }
    Ok(out)
}

/// Relative powers (equivalently, relative transmission time) per beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    pub lambda: [f64; NUM_BEAMS],
}

impl PowerAllocation {
    pub fn new(lambda: [f64; NUM_BEAMS]) -> Result<Self> {
        if lambda.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("allocations must be nonnegative"));
        }
        Ok(Self { lambda })
    }

    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Uniform split of `total` over the four beams.
    pub fn uniform(total: f64) -> Self {
        Self { lambda: [total / 4.0; NUM_BEAMS] }
    }

    /// Raises every beam to at least `min` transmissions, shrinking only the
    /// above-floor surplus so the total is preserved. Keeps realized designs
    /// identifiable when the optimum sits on the simplex boundary.
    pub fn with_floor(&self, min: f64) -> Self {
        let total = self.total();
        let n = NUM_BEAMS as f64;
        if total <= min * n {
            return Self { lambda: [total / n; NUM_BEAMS] };
        }
        let mut lam = self.lambda.map(|x| f64::max(x, min));
        let surplus: f64 = lam.iter().map(|x| x - min).sum();
        if surplus > 0.0 {
            let target = total - min * n;
            for x in &mut lam {
                *x = min + (*x - min) * target / surplus;
            }
        }
        Self { lambda: lam }
    }
}

/// `sum_k lambda_k J_k`.
pub fn allocation_fim(fims: &[Mat5; NUM_BEAMS], allocation: &PowerAllocation) -> Mat5 {
    let mut j = Mat5::zeros();
    for (jk, &l) in fims.iter().zip(&allocation.lambda) {
        j.add_scaled(jk, l);
    }
    j
}

/// Per-coordinate information scale achievable on the simplex, used to
/// equilibrate singularity checks: `total * sum_k diag(J_k)`.
fn achievable_scale(fims: &[Mat5; NUM_BEAMS], total: f64) -> Result<[f64; 5]> {
    let mut scale = [0.0; 5];
    for jk in fims {
        for (s, d) in scale.iter_mut().zip(jk.diagonal()) {
            *s += d;
        }
    }
    for s in &mut scale {
        *s *= total;
        if !(*s > 0.0) || !s.is_finite() {
            return Err(Error::Unlocalizable);
        }
    }
    Ok(scale)
}

/// PEB of an allocation, with singularity measured against the information
/// achievable on the whole simplex. Structurally uninformative allocations
/// (for instance zero weight on the only gain-bearing beam) come back as
/// [`Error::SingularFim`].
pub fn allocation_peb(
    fims: &[Mat5; NUM_BEAMS],
    allocation: &PowerAllocation,
    total: f64,
) -> Result<f64> {
    let scale = achievable_scale(fims, total)?;
    let j = allocation_fim(fims, allocation);
    let (inv, _) = j.spd_inverse_equilibrated(&scale, FIM_CONDITION_LIMIT)?;
    Ok(libm::sqrt(inv.0[0][0] + inv.0[1][1] + inv.0[2][2]))
}

fn squared_peb(fims: &[Mat5; NUM_BEAMS], lambda: &[f64; 4], scale: &[f64; 5]) -> Option<(f64, Mat5)> {
    let j = allocation_fim(fims, &PowerAllocation { lambda: *lambda });
    match j.spd_inverse_equilibrated(scale, FIM_CONDITION_LIMIT) {
        Ok((inv, _)) => Some((inv.0[0][0] + inv.0[1][1] + inv.0[2][2], inv)),
        Err(_) => None,
    }
}

/// Minimizes the PEB over the scaled simplex `{lambda >= 0, sum = total}` by
/// projected gradient descent with backtracking.
///
/// The objective `tr([J(lambda)^-1]_pos)` is convex in `lambda` since every
/// `J_k` is positive semidefinite; the gradient is
/// `d/d lambda_k = -tr(S J^-1 J_k J^-1)` with `S` selecting the position
/// block.
pub fn optimize_allocation(
    fims: &[Mat5; NUM_BEAMS],
    total: f64,
) -> Result<PowerAllocation> {
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidParameter("total must be positive"));
    }
    let scale = achievable_scale(fims, total)?;
    let mut lambda = [total / 4.0; NUM_BEAMS];
    let mut current = squared_peb(fims, &lambda, &scale);
    if current.is_none() {
        // the centre is uninformative; try the vertices before giving up
        for k in 0..NUM_BEAMS {
            let mut v = [0.0; NUM_BEAMS];
            v[k] = total;
            if let Some(f) = squared_peb(fims, &v, &scale) {
                lambda = v;
                current = Some(f);
                break;
            }
        }
    }
    let (mut fv, mut inv) = current.ok_or(Error::Unlocalizable)?;

    let mut eta = 1.0;
    for _ in 0..500 {
        // gradient of the squared bound
        let mut grad = [0.0; NUM_BEAMS];
        for (k, jk) in fims.iter().enumerate() {
            // -sum_{i<3} (J^-1 J_k J^-1)_{ii} = -sum_{i<3} r_i J_k r_i^T
            let mut acc = 0.0;
            for i in 0..3 {
                let r = inv.0[i];
                for a in 0..5 {
                    let mut jr = 0.0;
                    for b in 0..5 {
                        jr += jk.0[a][b] * r[b];
                    }
                    acc += r[a] * jr;
                }
            }
            grad[k] = -acc;
        }
        let gnorm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        let mut improved = false;
        let mut step = eta;
        while step > 1e-16 {
            let trial: Vec<f64> = lambda
                .iter()
                .zip(&grad)
                .map(|(l, g)| l - step * total * g / gnorm)
                .collect();
            let projected = project_simplex(&trial, total);
            let cand = [projected[0], projected[1], projected[2], projected[3]];
            if let Some((fc, ic)) = squared_peb(fims, &cand, &scale) {
                if fc < fv * (1.0 - 1e-12) {
                    lambda = cand;
                    fv = fc;
                    inv = ic;
                    improved = true;
                    eta = f64::min(step * 2.0, 1.0);
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    PowerAllocation::new(lambda)
}

/// Exhaustive search over the simplex grid with resolution `step * total`;
/// returns the best grid allocation and its PEB. Complements
/// [`optimize_allocation`] as an independent check.
pub fn grid_search_allocation(
    fims: &[Mat5; NUM_BEAMS],
    total: f64,
    step: f64,
) -> Result<(PowerAllocation, f64)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter("step must lie in (0, 1]"));
    }
    let n = libm::round(1.0 / step) as u64;
    let unit = total / n as f64;
    let mut best: Option<(f64, [f64; 4])> = None;
    for i in 0..=n {
        for j in 0..=(n - i) {
            for k in 0..=(n - i - j) {
                let l = n - i - j - k;
                let lambda = [
                    i as f64 * unit,
                    j as f64 * unit,
                    k as f64 * unit,
                    l as f64 * unit,
                ];
                if let Ok(p) = allocation_peb(fims, &PowerAllocation { lambda }, total) {
                    if best.map_or(true, |(b, _)| p < b) {
                        best = Some((p, lambda));
                    }
                }
            }
        }
    }
    let (peb, lambda) = best.ok_or(Error::Unlocalizable)?;
    Ok((PowerAllocation { lambda }, peb))
}

/// Realizes an allocation as a T-column precoder by time sharing.
///
/// Integer transmission counts come from largest-remainder rounding of the
/// allocation. Beam `k`'s per-transmission profile is the element-wise ratio
/// of the orthonormal beam to the illuminator steering vector, projected onto
/// `constraint` when one is given; the precoder column is the profile
/// re-multiplied by the illuminator response.
pub fn time_sharing_precoder(
    basis: &BeamBasis,
    allocation: &PowerAllocation,
    constraint: Option<&LookupTable>,
    array: &RisArray,
    p_bs: &CartesianPoint,
) -> Result<Precoder> {
    let total = allocation.total();
    let t = libm::round(total);
    if (total - t).abs() > 1e-6 || t < 1.0 {
        return Err(Error::InvalidParameter("allocation must sum to a positive integer"));
    }
    let counts = largest_remainder(&allocation.lambda, t as u32);
    let a_bs = steering_vector(array, p_bs)?;
    let mut columns = Vec::with_capacity(t as usize);
    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let beam = basis.beam(k);
        let mut omega: Vec<Complex64> =
            beam.iter().zip(&a_bs).map(|(u, a)| u / a).collect();
        if let Some(table) = constraint {
            omega = project_profile(&omega, table).into_omega();
        }
        let column: Vec<Complex64> = omega.iter().zip(&a_bs).map(|(w, a)| w * a).collect();
        for _ in 0..count {
            columns.push(column.clone());
        }
    }
    Precoder::new(columns, "optimal")
}

/// Draws `t` independent random profiles: uniform over the members of a
/// discrete table, or uniform phases on the unit circle when unconstrained.
pub fn random_profiles<R: Rng>(
    constraint: Option<&LookupTable>,
    array: &RisArray,
    p_bs: &CartesianPoint,
    t: usize,
    rng: &mut R,
) -> Result<Precoder> {
    if t == 0 {
        return Err(Error::InvalidParameter("need at least one transmission"));
    }
    let a_bs = steering_vector(array, p_bs)?;
    let m = array.num_elements();
    let discrete = constraint.filter(|c| !c.values().is_empty());
    let mut columns = Vec::with_capacity(t);
    for _ in 0..t {
        let mut column = Vec::with_capacity(m);
        for a in &a_bs {
            let w = match discrete {
                Some(table) => table.values()[rng.gen_range(0..table.cardinality())],
                None => {
                    let ph = rng.gen_range(0.0..2.0 * core::f64::consts::PI);
                    Complex64::new(libm::cos(ph), libm::sin(ph))
                }
            };
            column.push(w * a);
        }
        columns.push(column);
    }
    Precoder::new(columns, "random")
}

/// Whether the directional design redraws the aim point for every
/// transmission or holds one draw for the whole precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionalSampling {
    PerTransmission,
    SharedAcrossTransmissions,
}

/// Uniform draw inside a ball, by rejection from the bounding cube.
pub fn sample_in_ball<R: Rng>(
    center: &CartesianPoint,
    radius: f64,
    rng: &mut R,
) -> CartesianPoint {
    loop {
        let u = CartesianPoint::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        if u.dot(&u) <= 1.0 {
            return center.add(&u.scaled(radius));
        }
    }
}

/// Directional design: each transmission steers at a point drawn uniformly
/// inside an uncertainty sphere around the prior center. Draws that land in
/// degenerate geometry are rejected and retried a bounded number of times.
pub fn directional_profiles<R: Rng>(
    prior_center: &CartesianPoint,
    sphere_radius_m: f64,
    array: &RisArray,
    p_bs: &CartesianPoint,
    t: usize,
    constraint: Option<&LookupTable>,
    sampling: DirectionalSampling,
    rng: &mut R,
) -> Result<Precoder> {
    if !(sphere_radius_m > 0.0) {
        return Err(Error::InvalidParameter("sphere radius must be positive"));
    }
    if t == 0 {
        return Err(Error::InvalidParameter("need at least one transmission"));
    }
    let a_bs = steering_vector(array, p_bs)?;
    let draw_profile = |rng: &mut R| -> Result<Vec<Complex64>> {
        for _ in 0..100 {
            let q = sample_in_ball(prior_center, sphere_radius_m, rng);
            match combined_response_b(array, &q, p_bs) {
                Ok(b) => {
                    let mut omega: Vec<Complex64> = b.iter().map(|z| z.conj()).collect();
                    if let Some(table) = constraint {
                        omega = project_profile(&omega, table).into_omega();
                    }
                    return Ok(omega);
                }
                Err(_) => continue,
            }
        }
        Err(Error::DegeneratePoint)
    };
    let mut columns = Vec::with_capacity(t);
    match sampling {
        DirectionalSampling::SharedAcrossTransmissions => {
            let omega = draw_profile(rng)?;
            let column: Vec<Complex64> = omega.iter().zip(&a_bs).map(|(w, a)| w * a).collect();
            columns = alloc::vec![column; t];
        }
        DirectionalSampling::PerTransmission => {
            for _ in 0..t {
                let omega = draw_profile(rng)?;
                columns.push(omega.iter().zip(&a_bs).map(|(w, a)| w * a).collect());
            }
        }
    }
    Precoder::new(columns, "directional")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::{channel_gain, GainMode};
    use crate::linalg::{cdot, norm_sq};
    use rand::SeedableRng;

    fn setup() -> (RisArray, ChannelState, SignalConfig) {
        let config = SignalConfig::narrowband_default(28e9);
        let arr = RisArray::half_wavelength(8, 8, config.wavelength()).unwrap();
        let p_bs = CartesianPoint::new(3.0, 3.0, 0.0);
        let p_ue = CartesianPoint::new(-1.0, 1.0, 1.0);
        let alpha =
            channel_gain(&p_bs, &CartesianPoint::ORIGIN, &p_ue, 28e9, GainMode::PerCarrier)
                .unwrap();
        (arr, ChannelState::new(alpha, p_ue, p_bs).unwrap(), config)
    }

    #[test]
    fn basis_first_column_is_conjugate_steering_vector() {
        let (arr, ch, _) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let a = steering_vector(&arr, &ch.p_ue).unwrap();
        for (u, am) in basis.beam(0).iter().zip(&a) {
            assert!((u - am.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal_with_norm_sqrt_m() {
        let (arr, ch, _) = setup();
        let m = arr.num_elements() as f64;
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        for i in 0..NUM_BEAMS {
            let bi = basis.beam(i);
            assert!((norm_sq(&bi) - m).abs() < 1e-8 * m);
            for j in 0..i {
                let dot = cdot(&basis.beam(j), &bi);
                assert!(dot.norm() < 1e-8 * m, "beams {j},{i} overlap: {dot}");
            }
        }
    }

    #[test]
    fn basis_spans_the_raw_columns() {
        let (arr, ch, _) = setup();
        let m = arr.num_elements() as f64;
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        for k in 0..NUM_BEAMS {
            let raw = basis.raw().column(k);
            // project raw column onto the orthonormal beams
            let mut resid = raw.clone();
            for j in 0..NUM_BEAMS {
                let q = basis.beam(j);
                let coeff = cdot(&q, &raw) / m;
                for (r, qv) in resid.iter_mut().zip(&q) {
                    *r -= coeff * qv;
                }
            }
            let rel = crate::linalg::norm(&resid) / crate::linalg::norm(&raw);
            assert!(rel < 1e-8, "column {k} residual {rel}");
        }
    }

    #[test]
    fn combined_information_is_additive_over_counts() {
        let (arr, ch, config) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let fims = per_beam_fims(&basis, &arr, &ch, &config).unwrap();

        let allocation = PowerAllocation::new([3.0, 2.0, 1.0, 2.0]).unwrap();
        let precoder =
            time_sharing_precoder(&basis, &allocation, None, &arr, &ch.p_bs).unwrap();
        assert_eq!(precoder.num_transmissions(), 8);
        let d = mu_and_derivatives(&arr, &precoder, &ch).unwrap();
        let jac = jacobian_sph_wrt_cart(&ch.p_ue).unwrap();
        let direct = fim_cartesian(&fim_spherical(&d, &config), &jac);
        let summed = allocation_fim(&fims, &allocation);
        let scale = direct.max_abs();
        for i in 0..5 {
            for j in 0..5 {
                assert!(
                    (direct.0[i][j] - summed.0[i][j]).abs() <= 1e-10 * scale,
                    "({i},{j}): {} vs {}",
                    direct.0[i][j],
                    summed.0[i][j]
                );
            }
        }
    }

    #[test]
    fn single_beam_allocation_scales_one_fim() {
        let (arr, ch, config) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let fims = per_beam_fims(&basis, &arr, &ch, &config).unwrap();
        let t = 40.0;
        let only_first = PowerAllocation::new([t, 0.0, 0.0, 0.0]).unwrap();
        let j = allocation_fim(&fims, &only_first);
        let expect = fims[0].scaled(t);
        for i in 0..5 {
            for k in 0..5 {
                assert_eq!(j.0[i][k], expect.0[i][k]);
            }
        }
    }

    fn random_psd(rng: &mut ChaCha8Rng, magnitude: f64) -> Mat5 {
        let mut r = [[0.0; 5]; 5];
        for row in &mut r {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0) * magnitude;
            }
        }
        let mut j = Mat5::zeros();
        for i in 0..5 {
            for k in 0..5 {
                let mut acc = 0.0;
                for l in 0..5 {
                    acc += r[l][i] * r[l][k];
                }
                j.0[i][k] = acc;
            }
        }
        j
    }

    #[test]
    fn symmetric_instances_get_symmetric_allocations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let shared = random_psd(&mut rng, 1.0);
        let other = random_psd(&mut rng, 0.5);
        let fims = [shared, shared, other, other];
        let alloc = optimize_allocation(&fims, 40.0).unwrap();
        assert!((alloc.lambda[0] - alloc.lambda[1]).abs() < 1e-3 * 40.0);
        assert!((alloc.lambda[2] - alloc.lambda[3]).abs() < 1e-3 * 40.0);
        assert!((alloc.total() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn single_informative_beam_takes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j0 = random_psd(&mut rng, 1.0);
        let fims = [j0, Mat5::zeros(), Mat5::zeros(), Mat5::zeros()];
        let alloc = optimize_allocation(&fims, 40.0).unwrap();
        assert!(alloc.lambda[0] > 39.999, "{:?}", alloc.lambda);
        // with nothing informative at all, the problem is unlocalizable
        let nothing = [Mat5::zeros(); 4];
        assert!(matches!(optimize_allocation(&nothing, 40.0), Err(Error::Unlocalizable)));
    }

    #[test]
    fn optimizer_matches_grid_search_within_one_percent() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let fims: [Mat5; 4] = core::array::from_fn(|_| random_psd(&mut rng, 1.0));
            let total = 40.0;
            let opt = optimize_allocation(&fims, total).unwrap();
            let p_opt = allocation_peb(&fims, &opt, total).unwrap();
            let (_, p_grid) = grid_search_allocation(&fims, total, 0.05).unwrap();
            assert!(
                p_opt <= p_grid * 1.01,
                "seed {seed}: optimizer {p_opt} vs grid {p_grid}"
            );
        }
    }

    #[test]
    fn squared_bound_is_convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let fims: [Mat5; 4] = core::array::from_fn(|_| random_psd(&mut rng, 1.0));
        let total = 40.0;
        for _ in 0..20 {
            let draw = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                let p = project_simplex(&raw, total);
                PowerAllocation::new([p[0], p[1], p[2], p[3]]).unwrap()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let mid = PowerAllocation::new([
                0.5 * (a.lambda[0] + b.lambda[0]),
                0.5 * (a.lambda[1] + b.lambda[1]),
                0.5 * (a.lambda[2] + b.lambda[2]),
                0.5 * (a.lambda[3] + b.lambda[3]),
            ])
            .unwrap();
            let fa = allocation_peb(&fims, &a, total).unwrap().powi(2);
            let fb = allocation_peb(&fims, &b, total).unwrap().powi(2);
            let fm = allocation_peb(&fims, &mid, total).unwrap().powi(2);
            assert!(fm <= 0.5 * (fa + fb) + 1e-9 * (fa + fb));
        }
    }

    #[test]
    fn floor_keeps_total_and_minimum() {
        let alloc = PowerAllocation::new([39.7, 0.1, 0.1, 0.1]).unwrap();
        let floored = alloc.with_floor(1.0);
        assert!((floored.total() - 40.0).abs() < 1e-9);
        for l in floored.lambda {
            assert!(l >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn concentrated_allocation_repeats_one_column() {
        let (arr, ch, _) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let allocation = PowerAllocation::new([40.0, 0.0, 0.0, 0.0]).unwrap();
        let p = time_sharing_precoder(&basis, &allocation, None, &arr, &ch.p_bs).unwrap();
        assert_eq!(p.num_transmissions(), 40);
        for col in p.columns() {
            assert_eq!(col, &p.columns()[0]);
        }
        // unconstrained realization reproduces the beam exactly
        let beam = basis.beam(0);
        for (f, u) in p.columns()[0].iter().zip(&beam) {
            assert!((f - u).norm() < 1e-12);
        }
    }

    #[test]
    fn fractional_allocations_round_by_largest_remainder() {
        let (arr, ch, _) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let allocation = PowerAllocation::new([10.5, 10.5, 9.5, 9.5]).unwrap();
        let p = time_sharing_precoder(&basis, &allocation, None, &arr, &ch.p_bs).unwrap();
        assert_eq!(p.num_transmissions(), 40);
        // counts (11, 11, 9, 9): count occurrences of each beam column
        let beams: Vec<Vec<Complex64>> = (0..4).map(|k| basis.beam(k)).collect();
        let mut counts = [0usize; 4];
        for col in p.columns() {
            for (k, b) in beams.iter().enumerate() {
                if col.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-9) {
                    counts[k] += 1;
                }
            }
        }
        assert_eq!(counts, [11, 11, 9, 9]);
    }

    #[test]
    fn constrained_time_sharing_projects_profiles() {
        let (arr, ch, _) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let table = LookupTable::k2();
        let allocation = PowerAllocation::uniform(40.0);
        let p =
            time_sharing_precoder(&basis, &allocation, Some(&table), &arr, &ch.p_bs).unwrap();
        let a_bs = steering_vector(&arr, &ch.p_bs).unwrap();
        for col in p.columns() {
            for (f, a) in col.iter().zip(&a_bs) {
                let omega = f / a;
                assert!(
                    table.values().iter().any(|v| (v - omega).norm() < 1e-9),
                    "profile entry {omega} not in table"
                );
            }
        }
    }

    #[test]
    fn random_profiles_draw_uniformly_and_deterministically() {
        let (arr, ch, _) = setup();
        let table = LookupTable::k1();
        let mut rng = trial_rng(9, 0);
        let p = random_profiles(Some(&table), &arr, &ch.p_bs, 40, &mut rng).unwrap();
        let a_bs = steering_vector(&arr, &ch.p_bs).unwrap();
        let mut positive = 0usize;
        let mut total = 0usize;
        for col in p.columns() {
            for (f, a) in col.iter().zip(&a_bs) {
                let omega = f / a;
                assert!(table.values().iter().any(|v| (v - omega).norm() < 1e-9));
                if omega.re > 0.0 {
                    positive += 1;
                }
                total += 1;
            }
        }
        // binomial(n, 1/2): stay within 5 sigma of the mean
        let n = total as f64;
        let dev = (positive as f64 - 0.5 * n).abs();
        assert!(dev < 5.0 * libm::sqrt(0.25 * n), "{positive} of {total}");

        let mut rng2 = trial_rng(9, 0);
        let p2 = random_profiles(Some(&table), &arr, &ch.p_bs, 40, &mut rng2).unwrap();
        assert_eq!(p.columns(), p2.columns());
        let mut rng3 = trial_rng(9, 1);
        let p3 = random_profiles(Some(&table), &arr, &ch.p_bs, 40, &mut rng3).unwrap();
        assert_ne!(p.columns(), p3.columns());
    }

    #[test]
    fn unconstrained_random_profiles_have_mean_power_m() {
        let (arr, ch, _) = setup();
        let m = arr.num_elements() as f64;
        let mut rng = trial_rng(4, 0);
        let mut acc = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let p = random_profiles(None, &arr, &ch.p_bs, 1, &mut rng).unwrap();
            let a_bs = steering_vector(&arr, &ch.p_bs).unwrap();
            let s: Complex64 = p.columns()[0].iter().zip(&a_bs).map(|(f, a)| f / a).sum();
            acc += s.norm_sqr();
        }
        let mean = acc / trials as f64;
        assert!(mean > 0.85 * m && mean < 1.15 * m, "mean {mean}");
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = trial_rng(3, 0);
        let center = CartesianPoint::new(-1.0, 1.0, 1.0);
        for _ in 0..500 {
            let q = sample_in_ball(&center, 0.5, &mut rng);
            assert!(q.sub(&center).norm() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn tiny_sphere_reduces_to_exact_steering() {
        let (arr, ch, _) = setup();
        let mut rng = trial_rng(5, 0);
        let p = directional_profiles(
            &ch.p_ue,
            1e-9,
            &arr,
            &ch.p_bs,
            4,
            None,
            DirectionalSampling::PerTransmission,
            &mut rng,
        )
        .unwrap();
        let b = combined_response_b(&arr, &ch.p_ue, &ch.p_bs).unwrap();
        let a_bs = steering_vector(&arr, &ch.p_bs).unwrap();
        for col in p.columns() {
            for ((f, a), bm) in col.iter().zip(&a_bs).zip(&b) {
                let omega = f / a;
                assert!((omega - bm.conj()).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn shared_sampling_repeats_the_profile() {
        let (arr, ch, _) = setup();
        let mut rng = trial_rng(6, 0);
        let p = directional_profiles(
            &ch.p_ue,
            0.5,
            &arr,
            &ch.p_bs,
            5,
            None,
            DirectionalSampling::SharedAcrossTransmissions,
            &mut rng,
        )
        .unwrap();
        for col in p.columns() {
            assert_eq!(col, &p.columns()[0]);
        }
        let mut rng = trial_rng(6, 0);
        let q = directional_profiles(
            &ch.p_ue,
            0.5,
            &arr,
            &ch.p_bs,
            5,
            None,
            DirectionalSampling::PerTransmission,
            &mut rng,
        )
        .unwrap();
        assert_ne!(q.columns()[0], q.columns()[1]);
    }

    #[test]
    fn real_instance_allocation_beats_uniform_and_grid() {
        let (arr, ch, config) = setup();
        let basis = build_beam_basis(&arr, &ch.p_ue).unwrap();
        let fims = per_beam_fims(&basis, &arr, &ch, &config).unwrap();
        let total = 40.0;
        let opt = optimize_allocation(&fims, total).unwrap();
        let p_opt = allocation_peb(&fims, &opt, total).unwrap();
        let p_uniform = allocation_peb(&fims, &PowerAllocation::uniform(total), total).unwrap();
        assert!(p_opt <= p_uniform * (1.0 + 1e-9));
        let (_, p_grid) = grid_search_allocation(&fims, total, 0.05).unwrap();
        assert!(p_opt <= p_grid * 1.01, "{p_opt} vs {p_grid}");
        // floored realization keeps every beam alive and stays close
        let floored = opt.with_floor(1.0);
        let p_floor = allocation_peb(&fims, &floored, total).unwrap();
        assert!(p_floor <= p_opt * 1.1, "{p_floor} vs {p_opt}");
    }
}
