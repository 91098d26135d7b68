//! Scenario assembly from a config plus user mobility inside the room.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{MobilityModel, ScenarioConfig};
use crate::beamformer::BeamInputs;
use crate::channel::{ChannelState, InterferenceModel, LinkGeometry, RadioConstants, SubbandPlan};
use crate::error::Result;
use crate::hetero::generate_instance;
use crate::latency::{DeviceProfile, FovCatalog};
use crate::surface::{build_geometry, CouplingModel, Quadrature, RhsGeometry, SurfaceSpec};
use crate::units::{db_to_linear, dbm_to_watts};

/// Seed-independent surface, frequency plan and coupling network.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    pub plan: SubbandPlan,
    pub geometry: RhsGeometry,
    pub coupling: CouplingModel,
    pub position: Vector3<f64>,
}

impl SurfaceModel {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let c = &cfg.channel;
        let s = &cfg.surface;
        let plan = SubbandPlan::new(c.carrier_hz, c.bandwidth_hz, c.subbands)?;
        let lc = plan.carrier_wavelength();
        let spec = SurfaceSpec {
            nx: s.nx,
            ny: s.ny,
            spacing: s.spacing_m.unwrap_or(lc / 2.0),
            feeds: s.feeds,
            feed_positions: None,
            attenuation: s.attenuation_per_m,
            efficiency: s.efficiency,
            substrate_index: s.substrate_index,
            surface_wave_dir: Vector3::x(),
        };
        let geometry = build_geometry(&spec)?;
        let wl: Vec<f64> = (0..plan.len()).map(|u| plan.wavelength(u)).collect();
        let ld = s.dipole_len_m.unwrap_or(lc / 4.0);
        let coupling = if s.coupling {
            let quad = Quadrature { nodes: s.quad_nodes, tolerance: s.quad_tolerance };
            CouplingModel::build(&geometry, &wl, s.z_out_ohm, ld, quad)?
        } else {
            CouplingModel::uncoupled(geometry.num_elements(), &wl, s.z_out_ohm, ld)
        };
        Ok(Self { plan, geometry, coupling, position: Vector3::from(s.position_m) })
    }
}

/// Per-run link constants and workload.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub p_tx_w: f64,
    pub interference: InterferenceModel,
    pub radio: RadioConstants,
    pub kappa: Vec<f64>,
    pub catalog: FovCatalog,
    pub profiles: Vec<DeviceProfile>,
    pub mobility: Mobility,
}

impl Scenario {
    /// Draws the workload first, then the initial positions and headings.
    pub fn build(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c = &cfg.channel;
        let users = cfg.vr.users;
        let (catalog, profiles, _) = generate_instance(&cfg.vr, rng)?;
        let p_tx_w = dbm_to_watts(c.p_tx_dbm);
        Ok(Self {
            p_tx_w,
            interference: InterferenceModel::uniform(c.subbands, &[c.leak], p_tx_w, Some(c.adjacency)),
            radio: RadioConstants::uniform_ber(
                db_to_linear(c.g_tx_dbi),
                db_to_linear(c.g_rx_dbi),
                dbm_to_watts(c.n0_dbm_per_hz),
                users,
                c.subbands,
                c.ber_target,
            )?,
            kappa: vec![c.kappa_per_m; c.subbands],
            catalog,
            profiles,
            mobility: Mobility::new(cfg, users, rng),
        })
    }

    /// Same scenario at a different total transmit power; leakage scales with it.
    pub fn with_power(&self, p_tx_w: f64, cfg: &ScenarioConfig) -> Self {
        let mut out = self.clone();
        out.p_tx_w = p_tx_w;
        out.interference =
            InterferenceModel::uniform(cfg.channel.subbands, &[cfg.channel.leak], p_tx_w, Some(cfg.channel.adjacency));
        out
    }

    pub fn channel(&self, surface: &SurfaceModel) -> Result<ChannelState> {
        let link = LinkGeometry::new(surface.position, self.mobility.positions().to_vec())?;
        ChannelState::compute(&link, &surface.plan, &self.kappa)
    }

    pub fn inputs<'a>(&'a self, surface: &'a SurfaceModel, channel: &'a ChannelState) -> BeamInputs<'a> {
        BeamInputs {
            geometry: &surface.geometry,
            coupling: &surface.coupling,
            plan: &surface.plan,
            channel,
            interference: &self.interference,
            radio: &self.radio,
        }
    }
}

/// HMD motion in the horizontal plane at fixed height.
#[derive(Debug, Clone)]
pub struct Mobility {
    model: MobilityModel,
    room: [f64; 3],
    speed: f64,
    pos: Vec<Vector3<f64>>,
    vel: Vec<Vector3<f64>>,
    waypoints: Vec<Vector3<f64>>,
    rng: ChaCha8Rng,
}

impl Mobility {
    fn new(cfg: &ScenarioConfig, users: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = &cfg.room;
        let m = &cfg.mobility;
        let z = r.hmd_height_m;
        let pos: Vec<Vector3<f64>> = (0..users)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(r.spawn_min_m..=r.spawn_max_m),
                    rng.gen_range(r.spawn_min_m..=r.spawn_max_m),
                    z,
                )
            })
            .collect();
        let vel = match &m.velocities_mps {
            Some(v) => v.iter().map(|[vx, vy]| Vector3::new(*vx, *vy, 0.0)).collect(),
            None => (0..users)
                .map(|_| {
                    let h: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    Vector3::new(h.cos(), h.sin(), 0.0) * m.speed_mps
                })
                .collect(),
        };
        // own stream so waypoint draws never shift other seeded quantities
        let mut own = ChaCha8Rng::seed_from_u64(rng.gen());
        own.set_stream(7);
        let mut out =
            Self { model: m.model, room: r.size_m, speed: m.speed_mps, pos, vel, waypoints: Vec::new(), rng: own };
        if out.model == MobilityModel::RandomWaypoint {
            out.waypoints = (0..users).map(|l| out.draw_waypoint(l)).collect();
        }
        out
    }

    fn draw_waypoint(&mut self, l: usize) -> Vector3<f64> {
        Vector3::new(self.rng.gen_range(0.0..=self.room[0]), self.rng.gen_range(0.0..=self.room[1]), self.pos[l].z)
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.pos
    }

    pub fn inside_room(&self) -> bool {
        self.pos.iter().all(|p| (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.room[a]))
    }

    pub fn step(&mut self, dt: f64) {
        match self.model {
            MobilityModel::ConstantVelocity => {
                for (p, v) in self.pos.iter_mut().zip(self.vel.iter_mut()) {
                    *p += *v * dt;
                    for a in 0..2 {
                        reflect(&mut p[a], &mut v[a], self.room[a]);
                    }
                }
            }
            MobilityModel::RandomWaypoint => {
                for l in 0..self.pos.len() {
                    let mut budget = self.speed * dt;
                    // several waypoints may be reached in one long step
                    for _ in 0..64 {
                        let d = self.waypoints[l] - self.pos[l];
                        let dist = d.norm();
                        if dist > budget {
                            self.pos[l] += d * (budget / dist);
                            break;
                        }
                        self.pos[l] = self.waypoints[l];
                        budget -= dist;
                        self.waypoints[l] = self.draw_waypoint(l);
                        if budget <= 0.0 {
                            break;
                        }
                    }
                }
            }
        }
    }
}

/// Folds a coordinate back into [0, size], flipping the velocity per bounce.
fn reflect(x: &mut f64, v: &mut f64, size: f64) {
    for _ in 0..64 {
        if *x < 0.0 {
            *x = -*x;
            *v = -*v;
        } else if *x > size {
            *x = 2.0 * size - *x;
            *v = -*v;
        } else {
            return;
        }
    }
    *x = x.clamp(0.0, size);
}
