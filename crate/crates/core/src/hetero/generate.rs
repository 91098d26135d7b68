use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{zipf_probabilities, DeviceProfile, FovCatalog};

/// Random heterogeneous scenario parameters. Sizes in bits, rates in bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeteroSpec {
    pub users: usize,
    pub fovs: usize,
    pub q2d_bits: (f64, f64),
    /// Upper end of the 3D size draw; the lower end is max(this.0, Q2D).
    pub q3d_bits: (f64, f64),
    pub intensity: (f64, f64),
    pub zipf_exponent: f64,
    pub cpu_hz: Vec<f64>,
    pub rates_bps: Vec<f64>,
    pub zeta: f64,
    pub tau: f64,
    pub p_bar: (f64, f64),
    pub mem_bits: (f64, f64),
}

impl Default for HeteroSpec {
    fn default() -> Self {
        Self {
            users: 4,
            fovs: 100,
            q2d_bits: (1e6, 4e6),
            q3d_bits: (2e6, 8e6),
            intensity: (5.0, 15.0),
            zipf_exponent: 1.2,
            cpu_hz: vec![1.5e9, 2.0e9, 2.5e9, 3.0e9],
            rates_bps: vec![1.0e9, 1.5e9, 2.0e9, 2.5e9],
            zeta: 1e-27,
            tau: 0.02,
            p_bar: (2.0, 2.0),
            mem_bits: (100e6, 100e6),
        }
    }
}

impl HeteroSpec {
    /// Two users, four FoVs, budgets small enough to bind.
    pub fn small_test() -> Self {
        Self { users: 2, fovs: 4, p_bar: (0.5, 3.0), mem_bits: (3e6, 12e6), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("q2d_bits", self.q2d_bits),
            ("q3d_bits", self.q3d_bits),
            ("intensity", self.intensity),
            ("p_bar", self.p_bar),
            ("mem_bits", self.mem_bits),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("range {name} = [{lo}, {hi}] is invalid")));
            }
        }
        if self.users == 0 || self.fovs == 0 {
            return Err(Error::Config("need at least one user and one FoV".into()));
        }
        if self.cpu_hz.is_empty() || self.rates_bps.is_empty() {
            return Err(Error::Config("CPU and rate choice lists must be nonempty".into()));
        }
        if self.q3d_bits.1 < self.q2d_bits.1 {
            return Err(Error::Config("3D size range must reach the 2D maximum".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a catalog, per-user device profiles and per-user rates.
///
/// Each user gets its own random popularity ranking over the FoVs.
pub fn generate_instance(spec: &HeteroSpec, rng: &mut impl Rng) -> Result<(FovCatalog, Vec<DeviceProfile>, Vec<f64>)> {
    spec.validate()?;
    let zipf = zipf_probabilities(spec.fovs, spec.zipf_exponent);
    let mut q2d = Vec::with_capacity(spec.users);
    let mut q3d = Vec::with_capacity(spec.users);
    let mut o = Vec::with_capacity(spec.users);
    let mut pi = Vec::with_capacity(spec.users);
    let mut profiles = Vec::with_capacity(spec.users);
    let mut rates = Vec::with_capacity(spec.users);
    for _ in 0..spec.users {
        let mut row2 = Vec::with_capacity(spec.fovs);
        let mut row3 = Vec::with_capacity(spec.fovs);
        let mut rowo = Vec::with_capacity(spec.fovs);
        for _ in 0..spec.fovs {
            let a = draw(rng, spec.q2d_bits);
            row2.push(a);
            row3.push(draw(rng, (spec.q3d_bits.0.max(a), spec.q3d_bits.1)));
            rowo.push(draw(rng, spec.intensity));
        }
        let mut rank: Vec<usize> = (0..spec.fovs).collect();
        rank.shuffle(rng);
        pi.push(rank.iter().map(|&r| zipf[r]).collect());
        q2d.push(row2);
        q3d.push(row3);
        o.push(rowo);
        profiles.push(DeviceProfile {
            f: *spec.cpu_hz.choose(rng).expect("nonempty"),
            zeta: spec.zeta,
            p_bar: draw(rng, spec.p_bar),
            mem_bits: draw(rng, spec.mem_bits),
            tau: spec.tau,
        });
        rates.push(*spec.rates_bps.choose(rng).expect("nonempty"));
    }
    let catalog = FovCatalog::new(q2d, q3d, o, pi)?;
    Ok((catalog, profiles, rates))
}
