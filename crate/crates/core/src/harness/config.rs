//! Scenario configuration: one TOML document covering link, surface, room,
//! mobility, VR workload, solvers and sweeps.

use serde::{Deserialize, Serialize};

use crate::beamformer::{PgParams, Weighting};
use crate::error::{Error, Result};
use crate::hetero::{DcaParams, HeteroSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Base seed; per-run seeds are derived from it.
    pub seed: u64,
    pub channel: ChannelConfig,
    pub surface: SurfaceConfig,
    pub room: RoomConfig,
    pub mobility: MobilityConfig,
    /// FoV catalog and device draws.
    pub vr: HeteroSpec,
    pub solver: SolverConfig,
    pub beamformer: BeamformerConfig,
    pub homo: HomoConfig,
    pub sweeps: SweepConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            channel: ChannelConfig::default(),
            surface: SurfaceConfig::default(),
            room: RoomConfig::default(),
            mobility: MobilityConfig::default(),
            vr: HeteroSpec::default(),
            solver: SolverConfig::default(),
            beamformer: BeamformerConfig::default(),
            homo: HomoConfig::default(),
            sweeps: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subbands: usize,
    /// Molecular absorption, same on every subband (1/m).
    pub kappa_per_m: f64,
    /// Leakage coefficient of each adjacent subband.
    pub leak: f64,
    /// Subbands with |v − u| ≤ adjacency leak into u.
    pub adjacency: usize,
    pub g_tx_dbi: f64,
    pub g_rx_dbi: f64,
    pub n0_dbm_per_hz: f64,
    pub ber_target: f64,
    pub p_tx_dbm: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 300e9,
            bandwidth_hz: 40e9,
            subbands: 4,
            kappa_per_m: 3e-3,
            leak: 0.05,
            adjacency: 1,
            g_tx_dbi: 30.0,
            g_rx_dbi: 10.0,
            n0_dbm_per_hz: -174.0,
            ber_target: 1e-3,
            p_tx_dbm: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub nx: usize,
    pub ny: usize,
    pub feeds: usize,
    /// Element pitch; half the carrier wavelength when absent.
    pub spacing_m: Option<f64>,
    pub attenuation_per_m: f64,
    pub efficiency: f64,
    pub substrate_index: f64,
    pub z_out_ohm: f64,
    /// Dipole length; a quarter carrier wavelength when absent.
    pub dipole_len_m: Option<f64>,
    pub quad_nodes: usize,
    pub quad_tolerance: f64,
    /// false replaces Ξ_u by the identity.
    pub coupling: bool,
    pub position_m: [f64; 3],
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            ny: 16,
            feeds: 3,
            spacing_m: None,
            attenuation_per_m: 0.1,
            efficiency: 0.8,
            substrate_index: 3f64.sqrt(),
            z_out_ohm: 50.0,
            dipole_len_m: None,
            quad_nodes: 201,
            quad_tolerance: 1e-6,
            coupling: true,
            position_m: [0.0, 0.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub size_m: [f64; 3],
    /// Initial (x, y) drawn uniformly from [spawn_min, spawn_max]².
    pub spawn_min_m: f64,
    pub spawn_max_m: f64,
    pub hmd_height_m: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self { size_m: [6.0, 6.0, 3.0], spawn_min_m: 1.0, spawn_max_m: 5.0, hmd_height_m: 1.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilityModel {
    /// Straight lines, specular reflection at the walls.
    ConstantVelocity,
    RandomWaypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub speed_mps: f64,
    /// Explicit horizontal velocities per user; random headings when absent.
    pub velocities_mps: Option<Vec<[f64; 2]>>,
    pub ticks: usize,
    pub tick_s: f64,
    /// Short ticks per long tick.
    pub long_every: usize,
    /// false keeps the equal-weight beamformer state.
    pub optimize_beams: bool,
    pub deadline_mode: DeadlineMode,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::ConstantVelocity,
            speed_mps: 1.0,
            velocities_mps: None,
            ticks: 20,
            tick_s: 0.1,
            long_every: 10,
            optimize_beams: true,
            deadline_mode: DeadlineMode::Soft,
        }
    }
}

/// Whether link paths that miss τ are removed from the knapsack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadlineMode {
    Mask,
    Soft,
}

impl DeadlineMode {
    pub fn enforced(self) -> bool {
        self == DeadlineMode::Mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Greedy knapsack heuristic.
    H1,
    /// LP relaxation (fractional).
    H2,
    /// DCA/CCCP from the greedy solution.
    H3,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::H1 => "h1",
            Algorithm::H2 => "h2",
            Algorithm::H3 => "h3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Used by the two-timescale loop; must produce binary assignments.
    pub algorithm: Algorithm,
    pub lambda: Option<f64>,
    pub dca_eps: f64,
    pub dca_max_iter: usize,
    pub score_eps: f64,
    /// Deadline handling in the heterogeneous sweeps.
    pub deadline_mode: DeadlineMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = DcaParams::default();
        Self {
            algorithm: Algorithm::H3,
            lambda: d.lambda,
            dca_eps: d.eps,
            dca_max_iter: d.t_max,
            score_eps: d.score_eps,
            deadline_mode: DeadlineMode::Mask,
        }
    }
}

impl SolverConfig {
    pub fn dca_params(&self) -> DcaParams {
        DcaParams { lambda: self.lambda, eps: self.dca_eps, t_max: self.dca_max_iter, score_eps: self.score_eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformerConfig {
    pub weighting: Weighting,
    pub eta_p: f64,
    pub eta_a: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub normalize: bool,
}

impl Default for BeamformerConfig {
    fn default() -> Self {
        let p = PgParams::default();
        Self {
            weighting: Weighting::AsPrinted,
            eta_p: p.eta_p,
            eta_a: p.eta_a,
            eps: p.eps,
            max_iter: p.max_iter,
            normalize: p.normalize,
        }
    }
}

impl BeamformerConfig {
    pub fn params(&self) -> PgParams {
        PgParams {
            eta_p: self.eta_p,
            eta_a: self.eta_a,
            eps: self.eps,
            max_iter: self.max_iter,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomoConfig {
    pub v: usize,
    pub q2d_bits: f64,
    pub alpha: f64,
    pub tau_s: f64,
    pub zeta: f64,
    pub p_bar_w: f64,
    /// Zone-boundary grid axes.
    pub grid_alphas: Vec<f64>,
    pub grid_rates_bps: Vec<f64>,
    pub grid_cpu_hz: Vec<f64>,
    pub grid_o: f64,
    /// (R, f, o) cases for the δ sweeps.
    pub cases: Vec<[f64; 3]>,
    pub q_max_values: Vec<usize>,
    /// δ values for the Q_max sweep.
    pub delta_values: Vec<usize>,
    pub delta_step: usize,
}

impl Default for HomoConfig {
    fn default() -> Self {
        Self {
            v: 100,
            q2d_bits: 3e6,
            alpha: 2.0,
            tau_s: 0.02,
            zeta: 1e-27,
            p_bar_w: 5.0,
            grid_alphas: vec![1.5, 2.0, 3.0],
            grid_rates_bps: (1..=20).map(|i| i as f64 * 0.25e9).collect(),
            grid_cpu_hz: (0..=14).map(|i| 1.5e9 + i as f64 * 0.25e9).collect(),
            grid_o: 1.0,
            cases: vec![
                [1e9, 1.5e9, 5.0],
                [2e9, 1.5e9, 5.0],
                [1e9, 1.5e9, 10.0],
                [1e9, 2e9, 1.0],
                [1e9, 5e9, 1.0],
                [1e9, 2e9, 0.5],
            ],
            q_max_values: vec![20, 40],
            delta_values: vec![20, 60, 100, 150],
            delta_step: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Seeded runs per heterogeneous and beamforming sweep point.
    pub seeds: usize,
    pub e2e_seeds: usize,
    /// Budget-to-relaxed-usage ratios β_m and β_p.
    pub betas: Vec<f64>,
    pub rate_factors: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            e2e_seeds: 5,
            betas: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            rate_factors: vec![0.5, 1.0, 2.0],
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write Z_u, Ξ_u and the initial patterns m_u of the first e2e run.
    pub dump_matrices: bool,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let c = &self.channel;
        if c.subbands == 0 || !(c.carrier_hz > 0.0) || !(c.bandwidth_hz > 0.0) || c.bandwidth_hz / 2.0 >= c.carrier_hz {
            return bad(format!(
                "channel: need positive carrier and bandwidth below twice the carrier, got {} / {} Hz with {} subbands",
                c.carrier_hz, c.bandwidth_hz, c.subbands
            ));
        }
        if !(c.kappa_per_m >= 0.0) || !(c.leak >= 0.0) {
            return bad("channel: absorption and leakage must be non-negative".into());
        }
        if !(c.ber_target > 0.0 && c.ber_target < 0.2) {
            return bad(format!("channel: ber_target {} outside (0, 0.2)", c.ber_target));
        }
        for (name, v) in [
            ("g_tx_dbi", c.g_tx_dbi),
            ("g_rx_dbi", c.g_rx_dbi),
            ("n0_dbm_per_hz", c.n0_dbm_per_hz),
            ("p_tx_dbm", c.p_tx_dbm),
        ] {
            if !v.is_finite() {
                return bad(format!("channel: {name} must be finite"));
            }
        }
        let s = &self.surface;
        if s.nx == 0 || s.ny == 0 || s.feeds == 0 {
            return bad("surface: nx, ny and feeds must be at least 1".into());
        }
        if s.spacing_m.is_some_and(|d| !(d > 0.0)) || s.dipole_len_m.is_some_and(|d| !(d > 0.0)) {
            return bad("surface: spacing and dipole length must be positive".into());
        }
        if !(s.efficiency >= 0.0 && s.efficiency <= 1.0) || !(s.attenuation_per_m >= 0.0) {
            return bad("surface: efficiency must lie in [0, 1] and attenuation be non-negative".into());
        }
        if !(s.substrate_index >= 1.0) || !(s.z_out_ohm > 0.0) {
            return bad("surface: substrate index ≥ 1 and positive source impedance required".into());
        }
        if s.quad_nodes < 3 || s.quad_nodes.is_multiple_of(2) || !(s.quad_tolerance > 0.0) {
            return bad("surface: quad_nodes must be odd and ≥ 3, tolerance positive".into());
        }
        let r = &self.room;
        if r.size_m.iter().any(|&x| !(x > 0.0)) {
            return bad("room: dimensions must be positive".into());
        }
        if !(r.spawn_min_m >= 0.0 && r.spawn_min_m <= r.spawn_max_m && r.spawn_max_m <= r.size_m[0].min(r.size_m[1])) {
            return bad("room: spawn square must lie inside the floor plan".into());
        }
        if !(r.hmd_height_m >= 0.0 && r.hmd_height_m <= r.size_m[2]) {
            return bad("room: HMD height outside the room".into());
        }
        let m = &self.mobility;
        if m.long_every == 0 || !(m.tick_s > 0.0) || !(m.speed_mps >= 0.0) {
            return bad("mobility: long_every ≥ 1, tick_s > 0 and speed ≥ 0 required".into());
        }
        if let Some(v) = &m.velocities_mps {
            if v.len() != self.vr.users {
                return bad(format!("mobility: {} velocities for {} users", v.len(), self.vr.users));
            }
        }
        self.vr.validate()?;
        if !(self.solver.dca_eps > 0.0) || self.solver.lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("solver: dca_eps must be positive and lambda non-negative".into());
        }
        let b = &self.beamformer;
        if !(b.eta_p > 0.0 && b.eta_a > 0.0 && b.eps >= 0.0) {
            return bad("beamformer: step sizes must be positive and eps non-negative".into());
        }
        let h = &self.homo;
        if h.v == 0 || !(h.q2d_bits > 0.0) || !(h.alpha > 1.0) || h.delta_step == 0 {
            return bad("homo: need V ≥ 1, Q2D > 0, α > 1 and a positive δ step".into());
        }
        if h.cases.iter().flatten().any(|&x| !(x > 0.0)) || h.grid_alphas.iter().any(|&a| !(a > 1.0)) {
            return bad("homo: sweep cases must be positive and grid α > 1".into());
        }
        if self.sweeps.betas.iter().chain(&self.sweeps.rate_factors).any(|&x| !(x > 0.0)) {
            return bad("sweeps: ratios and factors must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ScenarioConfig::default();
        let s = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string().unwrap(), s);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ScenarioConfig::from_toml_str("[surface]\nnxx = 3\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            "[channel]\nber_target = 0.3\n",
            "[surface]\nquad_nodes = 200\n",
            "[room]\nspawn_max_m = 7.0\n",
            "[mobility]\nlong_every = 0\n",
            "[mobility]\nvelocities_mps = [[1.0, 0.0]]\n",
        ] {
            assert!(matches!(ScenarioConfig::from_toml_str(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn optional_fields_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.surface.spacing_m = Some(4e-4);
        cfg.mobility.velocities_mps = Some(vec![[0.5, -0.5]; 4]);
        cfg.solver.lambda = Some(3.0);
        cfg.mobility.model = MobilityModel::RandomWaypoint;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
