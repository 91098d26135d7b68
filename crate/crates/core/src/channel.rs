//! Frequency-selective THz link model.
//!
//! Line-of-sight spreading plus molecular absorption per subband, inter-band
//! interference from spectral leakage, and the M-QAM rate approximation that
//! turns SINR into spectral efficiency.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::SPEED_OF_LIGHT;

/// Equal-width split of the total band into `U` narrowband subbands.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandPlan {
    pub carrier_hz: f64,
    pub total_bandwidth_hz: f64,
    pub subband_bandwidth_hz: f64,
    pub centers_hz: Vec<f64>,
}

impl SubbandPlan {
    pub fn new(carrier_hz: f64, total_bandwidth_hz: f64, subbands: usize) -> Result<Self> {
        if subbands == 0 {
            return Err(Error::Domain("subband count must be at least 1".into()));
        }
        if !(carrier_hz > 0.0 && total_bandwidth_hz > 0.0) {
            return Err(Error::Domain(format!(
                "carrier {carrier_hz} Hz and bandwidth {total_bandwidth_hz} Hz must be positive"
            )));
        }
        if total_bandwidth_hz / 2.0 >= carrier_hz {
            return Err(Error::Domain("bandwidth extends below 0 Hz".into()));
        }
        let width = total_bandwidth_hz / subbands as f64;
        let centers_hz =
            (1..=subbands).map(|u| carrier_hz - total_bandwidth_hz / 2.0 + (u as f64 - 0.5) * width).collect();
        Ok(Self { carrier_hz, total_bandwidth_hz, subband_bandwidth_hz: width, centers_hz })
    }

    pub fn len(&self) -> usize {
        self.centers_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers_hz.is_empty()
    }

    /// Wavelength of subband `u` (m).
    pub fn wavelength(&self, u: usize) -> f64 {
        SPEED_OF_LIGHT / self.centers_hz[u]
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Surface phase center and HMD positions, world frame (m).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub surface_pos: Vector3<f64>,
    pub user_pos: Vec<Vector3<f64>>,
}

impl LinkGeometry {
    pub fn new(surface_pos: Vector3<f64>, user_pos: Vec<Vector3<f64>>) -> Result<Self> {
        let g = Self { surface_pos, user_pos };
        for l in 0..g.user_pos.len() {
            if g.distance(l) <= 0.0 {
                return Err(Error::Domain(format!("HMD {l} is colocated with the surface")));
            }
        }
        Ok(g)
    }

    pub fn num_users(&self) -> usize {
        self.user_pos.len()
    }

    /// Δ = p_l − p_R.
    pub fn offset(&self, l: usize) -> Vector3<f64> {
        self.user_pos[l] - self.surface_pos
    }

    pub fn distance(&self, l: usize) -> f64 {
        self.offset(l).norm()
    }
}

/// Amplitude of the LoS coefficient on subband center `freq_hz` at range `distance`.
pub fn channel_amplitude(distance: f64, freq_hz: f64, kappa: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("degenerate link distance {distance}")));
    }
    if !(freq_hz > 0.0) {
        return Err(Error::Domain(format!("non-positive frequency {freq_hz}")));
    }
    Ok(SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * freq_hz * distance) * (-kappa * distance / 2.0).exp())
}

/// h_{l,u}; real-positive in this model.
pub fn channel_gain(geometry: &LinkGeometry, plan: &SubbandPlan, kappa: f64, l: usize, u: usize) -> Result<Complex64> {
    let a = channel_amplitude(geometry.distance(l), plan.centers_hz[u], kappa)?;
    Ok(Complex64::new(a, 0.0))
}

/// Elevation θ and azimuth φ of HMD `l` seen from the surface.
///
/// When the HMD is directly above or below (Δx = Δy = 0) the azimuth is
/// reported as 0 and θ = ±π/2.
pub fn departure_angles(geometry: &LinkGeometry, l: usize) -> Result<(f64, f64)> {
    let d = geometry.offset(l);
    if d.norm() <= 0.0 {
        return Err(Error::Domain(format!("HMD {l} is colocated with the surface")));
    }
    let horiz = d.x.hypot(d.y);
    let phi = if horiz == 0.0 { 0.0 } else { d.y.atan2(d.x) };
    let theta = d.z.atan2(horiz);
    Ok((theta, phi))
}

/// Unit direction from (θ, φ); inverse of [`departure_angles`].
pub fn direction(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin())
}

/// Per-user, per-subband channel coefficients plus departure angles.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// h[l][u]
    pub h: Vec<Vec<Complex64>>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Absorption coefficient per subband (1/m).
    pub kappa: Vec<f64>,
}

impl ChannelState {
    pub fn compute(geometry: &LinkGeometry, plan: &SubbandPlan, kappa: &[f64]) -> Result<Self> {
        if kappa.len() != plan.len() {
            return Err(Error::Domain(format!("{} absorption coefficients for {} subbands", kappa.len(), plan.len())));
        }
        let mut h = Vec::with_capacity(geometry.num_users());
        let mut theta = Vec::with_capacity(geometry.num_users());
        let mut phi = Vec::with_capacity(geometry.num_users());
        for l in 0..geometry.num_users() {
            let row =
                (0..plan.len()).map(|u| channel_gain(geometry, plan, kappa[u], l, u)).collect::<Result<Vec<_>>>()?;
            h.push(row);
            let (t, p) = departure_angles(geometry, l)?;
            theta.push(t);
            phi.push(p);
        }
        Ok(Self { h, theta, phi, kappa: kappa.to_vec() })
    }
}

/// Spectral-leakage interference between subbands.
///
/// The waveform spectrum is taken as unit-energy, so the variance integral
/// collapses to `Σ_{v≠u} P_v |Σ_q α_{v,q}|²` over the adjacency set.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceModel {
    /// α_{v,q}: one row per subband v, one entry per leakage component q ∈ Q.
    pub leak_coeff: Vec<Vec<f64>>,
    /// P_v (W).
    pub subband_powers: Vec<f64>,
    /// Only subbands with |v − u| ≤ adjacency leak into u; `None` means all.
    pub adjacency: Option<usize>,
}

impl InterferenceModel {
    /// Same leakage coefficients for every subband and an equal power split.
    pub fn uniform(subbands: usize, leak: &[f64], total_power_w: f64, adjacency: Option<usize>) -> Self {
        Self {
            leak_coeff: vec![leak.to_vec(); subbands],
            subband_powers: vec![total_power_w / subbands as f64; subbands],
            adjacency,
        }
    }

    pub fn ibi_power(&self, u: usize) -> f64 {
        let mut total = 0.0;
        for (v, (&p, leak)) in self.subband_powers.iter().zip(&self.leak_coeff).enumerate() {
            if v == u {
                continue;
            }
            if let Some(adj) = self.adjacency {
                if v.abs_diff(u) > adj {
                    continue;
                }
            }
            let s: f64 = leak.iter().sum();
            total += p * s * s;
        }
        total
    }
}

/// Antenna gains, noise density and target BERs; all linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioConstants {
    pub g_tx: f64,
    pub g_rx: f64,
    /// W/Hz
    pub n0: f64,
    /// ε[l][u]
    pub ber_target: Vec<Vec<f64>>,
}

impl RadioConstants {
    pub fn uniform_ber(g_tx: f64, g_rx: f64, n0: f64, users: usize, subbands: usize, ber: f64) -> Result<Self> {
        check_ber(ber)?;
        Ok(Self { g_tx, g_rx, n0, ber_target: vec![vec![ber; subbands]; users] })
    }

    pub fn gain_product(&self) -> f64 {
        self.g_tx * self.g_rx
    }
}

fn check_ber(ber: f64) -> Result<()> {
    if !(ber > 0.0 && ber < 0.2) {
        return Err(Error::Domain(format!("target BER {ber} outside (0, 0.2); the rate formula needs ln(5ε) < 0")));
    }
    Ok(())
}

/// Interference-plus-noise term G^Tx G^Rx I_u + B_g n0 (W).
pub fn impairment_power(ibi: f64, consts: &RadioConstants, bandwidth_hz: f64) -> f64 {
    consts.gain_product() * ibi + bandwidth_hz * consts.n0
}

pub fn sinr(signal: Complex64, model: &InterferenceModel, consts: &RadioConstants, bandwidth_hz: f64, u: usize) -> f64 {
    let denom = impairment_power(model.ibi_power(u), consts, bandwidth_hz);
    consts.gain_product() * signal.norm_sqr() / denom
}

/// M-QAM spectral efficiency (bit/s/Hz) at SINR `gamma` and target BER `ber`.
pub fn spectral_efficiency(gamma: f64, ber: f64) -> Result<f64> {
    check_ber(ber)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("negative or NaN SINR {gamma}")));
    }
    Ok((1.0 - 1.5 * gamma / (5.0 * ber).ln()).log2())
}

/// R_l = B_g Σ_u k_{l,u}.
pub fn user_rate(spectral_efficiencies: &[f64], bandwidth_hz: f64) -> f64 {
    bandwidth_hz * spectral_efficiencies.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn geom(offset: [f64; 3]) -> LinkGeometry {
        let pr = Vector3::new(0.0, 0.0, 2.0);
        LinkGeometry::new(pr, vec![pr + Vector3::from(offset)]).unwrap()
    }

    #[test]
    fn subband_centers_are_exact() {
        let plan = SubbandPlan::new(300e9, 40e9, 4).unwrap();
        assert_eq!(plan.centers_hz, vec![285e9, 295e9, 305e9, 315e9]);
        assert_eq!(plan.subband_bandwidth_hz, 10e9);
    }

    #[test]
    fn gain_at_reference_point() {
        let g = geom([1.0, 1.0, -0.4]);
        assert!((g.distance(0) - 2.16f64.sqrt()).abs() < 1e-15);
        let amp = channel_amplitude(g.distance(0), 285e9, 3e-3).unwrap();
        // scalar evaluator: 3e8/(4π·285e9·1.469694) · exp(-3e-3·1.469694/2)
        let d: f64 = 2.16f64.sqrt();
        let expect = 3.0e8 / (4.0 * PI * 285.0e9 * d) * (-(3.0e-3) * d / 2.0).exp();
        assert!((amp - expect).abs() / expect < 1e-14);
        assert!((amp - 5.69e-5).abs() < 0.005e-5);
    }

    #[test]
    fn gain_unit_and_inverse_distance() {
        let f = SPEED_OF_LIGHT / (4.0 * PI);
        assert!((channel_amplitude(1.0, f, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let a1 = channel_amplitude(1.3, 300e9, 0.0).unwrap();
        let a2 = channel_amplitude(2.6, 300e9, 0.0).unwrap();
        assert!((a1 / a2 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn colocated_is_domain_error() {
        let pr = Vector3::new(0.0, 0.0, 2.0);
        assert!(LinkGeometry::new(pr, vec![pr]).is_err());
        assert!(channel_amplitude(0.0, 3e11, 0.0).is_err());
    }

    #[test]
    fn angles() {
        let (t, p) = departure_angles(&geom([1.0, 0.0, 0.0]), 0).unwrap();
        assert_eq!((t, p), (0.0, 0.0));
        let (t, p) = departure_angles(&geom([0.0, 1.0, 1.0]), 0).unwrap();
        assert!((t - PI / 4.0).abs() < 1e-15 && (p - PI / 2.0).abs() < 1e-15);
        let (t, p) = departure_angles(&geom([1.0, 1.0, -0.4]), 0).unwrap();
        assert!((p - PI / 4.0).abs() < 1e-15);
        assert!((t - (-0.4f64).atan2(2f64.sqrt())).abs() < 1e-15);
        let (t, p) = departure_angles(&geom([0.0, 0.0, -1.0]), 0).unwrap();
        assert_eq!(p, 0.0);
        assert!((t + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ibi_cases() {
        let zero = InterferenceModel::uniform(4, &[0.0], 1.0, Some(1));
        assert!((0..4).all(|u| zero.ibi_power(u) == 0.0));

        let two = InterferenceModel::uniform(2, &[0.05], 1.0, Some(1));
        assert!((two.ibi_power(0) - 1.25e-3).abs() < 1e-18);

        let mut scaled = InterferenceModel::uniform(4, &[0.05], 1.0, Some(1));
        let base: Vec<f64> = (0..4).map(|u| scaled.ibi_power(u)).collect();
        scaled.subband_powers.iter_mut().for_each(|p| *p *= 2.0);
        for u in 0..4 {
            assert!((scaled.ibi_power(u) - 2.0 * base[u]).abs() < 1e-18);
        }
        // edge subbands have one neighbour, inner ones two
        assert!((base[1] / base[0] - 2.0).abs() < 1e-12);
        let all = InterferenceModel::uniform(4, &[0.05], 1.0, None);
        assert!((all.ibi_power(0) / base[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_cases() {
        let model = InterferenceModel::uniform(2, &[0.0], 1.0, Some(1));
        let c = RadioConstants::uniform_ber(1.0, 1.0, 1e-20, 1, 2, 1e-3).unwrap();
        assert_eq!(sinr(Complex64::new(0.0, 0.0), &model, &c, 1e9, 0), 0.0);
        let s = (1e9f64 * 1e-20).sqrt();
        assert!((sinr(Complex64::new(s, 0.0), &model, &c, 1e9, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_reference_values() {
        use crate::units::{db_to_linear, dbm_to_watts};
        let model = InterferenceModel::uniform(4, &[0.0], 1.0, Some(1));
        let c = RadioConstants::uniform_ber(db_to_linear(30.0), db_to_linear(10.0), dbm_to_watts(-174.0), 1, 4, 1e-3)
            .unwrap();
        let g = sinr(Complex64::new(1e-6, 0.0), &model, &c, 10e9, 0);
        // 1e4 · 1e-12 / (1e10 · 10^(-20.4))
        let expect = 1e4 * 1e-12 / (1e10 * 10f64.powf(-20.4));
        assert!((g - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn spectral_efficiency_cases() {
        assert_eq!(spectral_efficiency(0.0, 1e-3).unwrap(), 0.0);
        let eps = 5e-2;
        let gamma = (5.0f64 * eps).ln().abs() / 1.5;
        assert!((spectral_efficiency(gamma, eps).unwrap() - 1.0).abs() < 1e-14);
        let k = spectral_efficiency(10.0, 1e-3).unwrap();
        assert!((k - 1.937_7).abs() < 1e-3);
        assert!(spectral_efficiency(1.0, 0.2).is_err());
        assert!(spectral_efficiency(-1.0, 0.01).is_err());
    }

    #[test]
    fn rate_sums() {
        assert_eq!(user_rate(&[0.0; 4], 10e9), 0.0);
        assert_eq!(user_rate(&[1.0; 4], 10e9), 40e9);
    }
}
