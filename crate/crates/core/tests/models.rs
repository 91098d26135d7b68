//! Cross-module checks through the public API.

use approx::assert_relative_eq;
use holovr_core::beamformer::{link_rates, BeamContext};
use holovr_core::channel::{channel_amplitude, spectral_efficiency, LinkGeometry, SubbandPlan};
use holovr_core::harness::{scenario_for, ScenarioConfig, SurfaceModel};
use holovr_core::homo::{self, HomoBudgets, HomoInstance, Zone};
use holovr_core::latency::{omega_weights, Path, PathAssignment};
use nalgebra::Vector3;
use proptest::prelude::*;

#[test]
fn free_space_loss_at_one_meter() {
    // (c / 4π f d)² at 300 GHz and 1 m is about -82 dB
    let a = channel_amplitude(1.0, 300e9, 0.0).unwrap();
    let db = 20.0 * a.log10();
    assert!((db - (-81.98)).abs() < 0.01, "{db}");
    // absorption halves the amplitude exponent per metre
    let k = channel_amplitude(10.0, 300e9, 0.2).unwrap() / channel_amplitude(10.0, 300e9, 0.0).unwrap();
    assert_relative_eq!(k, (-1.0f64).exp(), max_relative = 1e-14);
}

#[test]
fn qam_efficiency_hand_values() {
    // γ = 0 carries nothing; ε = 1e-3 gives log2(1 + 1.5γ/ln 200)
    assert_eq!(spectral_efficiency(0.0, 1e-3).unwrap(), 0.0);
    let g = 100.0;
    let want = (1.0 + 1.5 * g / 200f64.ln()).log2();
    assert_relative_eq!(spectral_efficiency(g, 1e-3).unwrap(), want, max_relative = 1e-14);
    assert!(spectral_efficiency(1.0, 0.5).is_err());
}

#[test]
fn link_geometry_rejects_colocated_user() {
    let p = Vector3::new(0.0, 0.0, 2.0);
    assert!(LinkGeometry::new(p, vec![p]).is_err());
    assert!(channel_amplitude(0.0, 3e11, 0.0).is_err());
}

#[test]
fn homogeneous_budgets_from_reference_values() {
    // V P̄ τ / (ζ f² Q2D o) = 100·5·0.02 / (1e-27·4e18·3e6·1) = 833.3
    let b = HomoBudgets { p_bar: 5.0, zeta: 1e-27, mem_bits: 60e6 };
    let inst = HomoInstance::from_budgets(100, 3e6, 2.0, 1e9, 2e9, 1.0, 0.02, b).unwrap();
    assert_eq!(inst.q_max, 833);
    assert_eq!(inst.delta, 20);
    let sol = homo::solve(&inst).unwrap();
    assert_eq!(sol.zone, Zone::OnDeviceRender);
    // every FoV can be rendered, so all 20 slots hold 2D copies
    assert_eq!(sol.policy.p2d, 20);
    assert_eq!(sol.policy.r, 100);
}

#[test]
fn omega_counts_link_bits_only() {
    let cfg = ScenarioConfig::default();
    let sc = scenario_for(&cfg, 5).unwrap();
    let (users, fovs) = (sc.catalog.users(), sc.catalog.fovs());
    let local = omega_weights(&PathAssignment::uniform(users, fovs, Path::Prefetched3D), &sc.catalog).unwrap();
    assert!(local.iter().all(|&w| w == 0.0));
    let remote = omega_weights(&PathAssignment::uniform(users, fovs, Path::Remote3D), &sc.catalog).unwrap();
    for (l, &w) in remote.iter().enumerate() {
        let want: f64 = (0..fovs).map(|i| sc.catalog.pi[l][i] * sc.catalog.q3d[l][i]).sum();
        assert_relative_eq!(w, want, max_relative = 1e-12);
    }
}

#[test]
fn fast_rates_match_matrix_path_on_a_coupled_surface() {
    let mut cfg = ScenarioConfig::default();
    cfg.surface.nx = 6;
    cfg.surface.ny = 6;
    let surface = SurfaceModel::build(&cfg).unwrap();
    let sc = scenario_for(&cfg, 12).unwrap();
    let ch = sc.channel(&surface).unwrap();
    let inputs = sc.inputs(&surface, &ch);
    let ctx = BeamContext::new(&inputs, &[1e6; 4], cfg.beamformer.weighting, sc.p_tx_w).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let st = ctx.random_state(&mut rng);
    for (a, b) in ctx.user_rates(&st).iter().zip(link_rates(&inputs, &st).unwrap()) {
        assert_relative_eq!(*a, b, max_relative = 1e-10);
    }
}

proptest! {
    #[test]
    fn subband_centers_are_symmetric(fc in 1e11f64..1e12, frac in 0.01f64..0.3, u in 1usize..12) {
        let plan = SubbandPlan::new(fc, fc * frac, u).unwrap();
        let mean = plan.centers_hz.iter().sum::<f64>() / u as f64;
        prop_assert!((mean - fc).abs() <= 1e-9 * fc);
        for w in plan.centers_hz.windows(2) {
            prop_assert!((w[1] - w[0] - plan.subband_bandwidth_hz).abs() <= 1e-6 * plan.subband_bandwidth_hz);
        }
    }
}
