//! The four experiment suites. Each fans seeded runs out over the worker
//! pool, collects results in input order and writes CSV from one thread.

use std::path::Path as FsPath;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::output::{write_plot_script, CsvSink, PlotSpec};
use super::scenario::{Scenario, SurfaceModel};
use super::timescale::{audit_delays, run_two_timescale, scenario_for, solve_placement, RunOptions, RunRecord};
use super::{derive_seed, Audit, SuiteOutput};
use crate::beamformer::{baselines, is_feasible, link_rates, pg_solve, BeamContext, BeamformingState, PgReport};
use crate::csv_row;
use crate::error::Result;
use crate::hetero::{
    budget_ratios, dca_cccp, generate_instance, greedy_mmkp, lp_relaxation, MmkpInstance, ScoreParams, SolverReport,
};
use crate::homo::{self, allocation_breakdown, classify_zone, evaluate_policy, HomoInstance, Zone};
use crate::latency::{
    delay_table, omega_weights, path_delay, total_delay, DeviceProfile, FovCatalog, Path, PathAssignment,
};
use crate::surface::{synthesize_pattern, write_complex_csv, PatternBases};
use crate::units::linear_to_db;

const AUDIT_TOL: f64 = 1e-10;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- homo

fn homo_base(cfg: &ScenarioConfig, rate: f64, f: f64, o: f64, alpha: f64) -> HomoInstance {
    let h = &cfg.homo;
    HomoInstance { v: h.v, q2d: h.q2d_bits, alpha, rate, f, o, delta: 0, q_max: 0, tau: h.tau_s }
}

struct HomoPoint {
    case: usize,
    inst: HomoInstance,
    sol: homo::HomoSolution,
}

pub fn homo_suite(cfg: &ScenarioConfig, out: &FsPath) -> Result<SuiteOutput> {
    let h = &cfg.homo;
    let mut res = SuiteOutput::default();

    // zone boundary map
    let mut grid = CsvSink::create(
        out,
        "homo_zone_grid",
        &["alpha", "rate_bps", "f_hz", "o", "o_over_f", "boundary", "zone", "t3_minus_t4"],
    )?;
    let mut mismatches = 0;
    let mut cells = 0;
    for &alpha in &h.grid_alphas {
        for &rate in &h.grid_rates_bps {
            for &f in &h.grid_cpu_hz {
                let inst = homo_base(cfg, rate, f, h.grid_o, alpha);
                let zone = classify_zone(&inst);
                let diff = inst.t3() - inst.t4();
                cells += 1;
                if (diff < 0.0) != (zone == Zone::OnDeviceRender) {
                    mismatches += 1;
                }
                grid.row(&csv_row![alpha, rate, f, h.grid_o, h.grid_o / f, (alpha - 1.0) / rate, zone.as_str(), diff])?;
            }
        }
    }
    res.files.push(grid.finish()?);
    res.audits.push(Audit::check(
        "homo_zone_sign",
        mismatches == 0,
        format!("{mismatches} of {cells} grid cells disagree with sign(T3 - T4)"),
    ));

    // δ sweeps per (R, f, o) case and Q_max
    let delta_max = ((h.alpha + 1.0) * h.v as f64).ceil() as usize;
    let mut jobs = Vec::new();
    for (c, &[rate, f, o]) in h.cases.iter().enumerate() {
        for &q_max in &h.q_max_values {
            for delta in (0..=delta_max).step_by(h.delta_step) {
                let mut inst = homo_base(cfg, rate, f, o, h.alpha);
                inst.delta = delta;
                inst.q_max = q_max;
                jobs.push((c, inst));
            }
        }
    }
    let by_delta = solve_homo(jobs)?;
    let mut jobs = Vec::new();
    for (c, &[rate, f, o]) in h.cases.iter().enumerate() {
        for &delta in &h.delta_values {
            for q_max in (0..=h.v).step_by(h.delta_step) {
                let mut inst = homo_base(cfg, rate, f, o, h.alpha);
                inst.delta = delta;
                inst.q_max = q_max;
                jobs.push((c, inst));
            }
        }
    }
    let by_qmax = solve_homo(jobs)?;

    let cols = [
        "case",
        "zone",
        "rate_bps",
        "f_hz",
        "o",
        "q_max",
        "delta",
        "delay_s",
        "p2d",
        "p3d",
        "r",
        "closed_form",
        "n_prefetch3d",
        "n_cached2d",
        "n_remote2d",
        "n_remote3d",
    ];
    let mut worst: f64 = 0.0;
    let mut increases = 0;
    for (name, pts, key) in [("homo_delay_vs_delta", &by_delta, 0), ("homo_delay_vs_qmax", &by_qmax, 1)] {
        let mut s = CsvSink::create(out, name, &cols)?;
        let mut prev: Option<(usize, usize, f64)> = None;
        for p in pts.iter() {
            let i = &p.inst;
            let pol = &p.sol.policy;
            let [n1, n2, n3, n4] = allocation_breakdown(pol, i.v)?;
            s.row(&csv_row![
                p.case,
                p.sol.zone.as_str(),
                i.rate,
                i.f,
                i.o,
                i.q_max,
                i.delta,
                p.sol.delay,
                pol.p2d,
                pol.p3d,
                pol.r,
                p.sol.closed_form,
                n1,
                n2,
                n3,
                n4
            ])?;
            worst = worst.max(rel_err(evaluate_policy(i, pol)?, p.sol.delay));
            // curve identity: case plus the held parameter
            let held = if key == 0 { i.q_max } else { i.delta };
            if let Some((pc, ph, pd)) = prev {
                if pc == p.case && ph == held && p.sol.delay > pd * (1.0 + 1e-12) {
                    increases += 1;
                }
            }
            prev = Some((p.case, held, p.sol.delay));
        }
        res.files.push(s.finish()?);
    }
    res.audits.push(Audit::check(
        "homo_delay_recompute",
        worst <= AUDIT_TOL,
        format!("largest relative deviation {worst:.3e}"),
    ));
    res.audits.push(Audit::check(
        "homo_monotone",
        increases == 0,
        format!("{increases} sweep steps increased the optimal delay"),
    ));
    res.files.push(write_plot_script(
        out,
        "homo_sweeps",
        &[
            PlotSpec {
                file: "homo_zone_grid",
                x: "rate_bps",
                y: "t3_minus_t4",
                group: &["alpha", "f_hz"],
                query: None,
            },
            PlotSpec { file: "homo_delay_vs_delta", x: "delta", y: "delay_s", group: &["case", "q_max"], query: None },
            PlotSpec { file: "homo_delay_vs_qmax", x: "q_max", y: "delay_s", group: &["case", "delta"], query: None },
            PlotSpec {
                file: "homo_delay_vs_delta",
                x: "delta",
                y: "n_remote3d",
                group: &["case", "q_max"],
                query: Some("zone == 'remote-3d'"),
            },
        ],
    )?);
    Ok(res)
}

fn solve_homo(jobs: Vec<(usize, HomoInstance)>) -> Result<Vec<HomoPoint>> {
    jobs.into_par_iter().map(|(case, inst)| Ok(HomoPoint { case, sol: homo::solve(&inst)?, inst })).collect()
}

// -------------------------------------------------------------- hetero

struct HeteroRow {
    seed: u64,
    sweep: &'static str,
    value: f64,
    alg: &'static str,
    rep: SolverReport,
    beta: (f64, f64),
    feasible: bool,
    recompute_err: f64,
}

fn hetero_run(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<HeteroRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (catalog, profiles, rates) = generate_instance(&cfg.vr, &mut rng)?;
    let enforce = cfg.solver.deadline_mode.enforced();
    let base = MmkpInstance::from_model(&catalog, &profiles, &rates, enforce)?;
    let relaxed = lp_relaxation(&base)?;
    let (mem_use, pow_use) = base.usage(&relaxed.assignment);

    let mut variants: Vec<(&'static str, f64, Vec<DeviceProfile>, Vec<f64>)> = Vec::new();
    for &b in &cfg.sweeps.betas {
        let scaled = |used: &[f64], pick: fn(&mut DeviceProfile) -> &mut f64| {
            let mut p = profiles.clone();
            for (l, prof) in p.iter_mut().enumerate() {
                if used[l] > 0.0 {
                    *pick(prof) = b * used[l];
                }
            }
            p
        };
        variants.push(("beta_m", b, scaled(&mem_use, |p| &mut p.mem_bits), rates.clone()));
        variants.push(("beta_p", b, scaled(&pow_use, |p| &mut p.p_bar), rates.clone()));
    }
    for &k in &cfg.sweeps.rate_factors {
        variants.push(("rate", k, profiles.clone(), rates.iter().map(|r| r * k).collect()));
    }

    let score = ScoreParams { eps: cfg.solver.score_eps };
    let mut rows = Vec::new();
    for (sweep, value, prof, r) in variants {
        let inst = match MmkpInstance::from_model(&catalog, &prof, &r, enforce) {
            Ok(i) if i.check_baseline().is_ok() => i,
            Ok(_) | Err(_) => {
                log::warn!("seed {seed}: {sweep}={value} has no deadline-feasible baseline; skipped");
                continue;
            }
        };
        let h1 = greedy_mmkp(&inst, score)?;
        let h2 = lp_relaxation(&inst)?;
        let h3 = dca_cccp(&inst, cfg.solver.dca_params(), &h1.assignment)?;
        let beta = budget_ratios(&inst, &h2.assignment);
        let delays = delay_table(&catalog, &prof, &r);
        for (alg, rep) in [("h1", h1), ("h2", h2), ("h3", h3)] {
            let direct = total_delay(&rep.assignment, &delays, &catalog);
            rows.push(HeteroRow {
                seed,
                sweep,
                value,
                alg,
                feasible: rep.assignment.relaxed || inst.is_feasible(&rep.assignment),
                recompute_err: rel_err(direct, rep.total_delay),
                rep,
                beta,
            });
        }
    }
    Ok(rows)
}

pub fn hetero_suite(cfg: &ScenarioConfig, out: &FsPath) -> Result<SuiteOutput> {
    let seeds: Vec<u64> = (0..cfg.sweeps.seeds as u64).map(|i| derive_seed(cfg.seed, i)).collect();
    let runs: Vec<Vec<HeteroRow>> = seeds.par_iter().map(|&s| hetero_run(cfg, s)).collect::<Result<_>>()?;
    let mut s = CsvSink::create(
        out,
        "hetero_delays",
        &[
            "seed",
            "sweep",
            "value",
            "alg",
            "delay_s",
            "bound_s",
            "beta_m",
            "beta_p",
            "iterations",
            "converged",
            "repaired",
            "fallback",
        ],
    )?;
    let mut infeasible = 0;
    let mut worst: f64 = 0.0;
    let mut below_bound = 0;
    for r in runs.iter().flatten() {
        let bound = r.rep.bound.map_or(String::new(), |b| b.to_string());
        s.row(&csv_row![
            r.seed,
            r.sweep,
            r.value,
            r.alg,
            r.rep.total_delay,
            bound,
            r.beta.0,
            r.beta.1,
            r.rep.iterations,
            r.rep.converged,
            r.rep.repaired,
            r.rep.fallback
        ])?;
        infeasible += usize::from(!r.feasible);
        worst = worst.max(r.recompute_err);
        if let Some(b) = r.rep.bound {
            if r.rep.total_delay < b - 1e-9 * b.abs() {
                below_bound += 1;
            }
        }
    }
    let mut res = SuiteOutput::default();
    res.files.push(s.finish()?);
    res.audits.push(Audit::check(
        "hetero_feasible",
        infeasible == 0,
        format!("{infeasible} infeasible binary assignments"),
    ));
    res.audits.push(Audit::check(
        "hetero_delay_recompute",
        worst <= AUDIT_TOL,
        format!("largest relative deviation {worst:.3e}"),
    ));
    res.audits.push(Audit::check(
        "hetero_bound",
        below_bound == 0,
        format!("{below_bound} solutions below the relaxation bound"),
    ));
    res.files.push(write_plot_script(
        out,
        "hetero_sweeps",
        &[
            PlotSpec {
                file: "hetero_delays",
                x: "value",
                y: "delay_s",
                group: &["alg"],
                query: Some("sweep == 'beta_m'"),
            },
            PlotSpec {
                file: "hetero_delays",
                x: "value",
                y: "delay_s",
                group: &["alg"],
                query: Some("sweep == 'beta_p'"),
            },
            PlotSpec {
                file: "hetero_delays",
                x: "value",
                y: "delay_s",
                group: &["alg"],
                query: Some("sweep == 'rate'"),
            },
        ],
    )?);
    Ok(res)
}

// ------------------------------------------------------------ beamform

/// Per-user expected delay Σ_i π T under fixed paths.
fn user_delays(catalog: &FovCatalog, profiles: &[DeviceProfile], paths: &[Vec<Path>], rates: &[f64]) -> Vec<f64> {
    paths
        .iter()
        .enumerate()
        .map(|(l, row)| {
            row.iter()
                .enumerate()
                .map(|(i, &p)| catalog.pi[l][i] * path_delay(catalog, &profiles[l], rates[l], l, i, p))
                .sum()
        })
        .collect()
}

/// Rate weights from the placement under equal-beam rates; all-remote-3D
/// when placement fails.
fn initial_weights(cfg: &ScenarioConfig, sc: &Scenario, probe: &BeamContext) -> Result<PathAssignment> {
    let rates = probe.user_rates(&probe.equal_state());
    match solve_placement(cfg, sc, &rates) {
        Ok(x) => Ok(x),
        Err(e) => {
            log::warn!("placement for beam sweep failed ({e}); using remote 3D everywhere");
            Ok(PathAssignment::uniform(sc.catalog.users(), sc.catalog.fovs(), Path::Remote3D))
        }
    }
}

struct BeamRow {
    seed: u64,
    snr_db: f64,
    p_tx_w: f64,
    variant: &'static str,
    objective: f64,
    iterations: usize,
    converged: bool,
    rates: Vec<f64>,
    delays: Vec<f64>,
}

struct BeamRun {
    rows: Vec<BeamRow>,
    traces: Vec<(f64, Vec<f64>)>,
    feasible: bool,
    rate_err: f64,
    dips: usize,
    steps: usize,
}

fn beam_run(cfg: &ScenarioConfig, surface: &SurfaceModel, seed: u64) -> Result<BeamRun> {
    let sc = scenario_for(cfg, seed)?;
    let users = sc.catalog.users();
    let channel = sc.channel(surface)?;
    let probe =
        BeamContext::new(&sc.inputs(surface, &channel), &vec![1.0; users], cfg.beamformer.weighting, sc.p_tx_w)?;
    let x = initial_weights(cfg, &sc, &probe)?;
    let paths = x.paths();
    let omega = omega_weights(&x, &sc.catalog)?;

    // noise-only SNR of the equal state at the configured power
    let g = sc.radio.gain_product();
    let noise = surface.plan.subband_bandwidth_hz * sc.radio.n0;
    let s2 = probe.signal_power(&probe.equal_state());
    let mean: f64 = s2.iter().flatten().sum::<f64>() / (s2.len() * s2[0].len()) as f64;
    let snr_ref_db = linear_to_db(g * mean / noise);

    let mut run = BeamRun { rows: Vec::new(), traces: Vec::new(), feasible: true, rate_err: 0.0, dips: 0, steps: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    for &snr in &cfg.sweeps.snr_db {
        let p_tx = sc.p_tx_w * 10f64.powf((snr - snr_ref_db) / 10.0);
        let scp = sc.with_power(p_tx, cfg);
        let inputs = scp.inputs(surface, &channel);
        let ctx = BeamContext::new(&inputs, &omega, cfg.beamformer.weighting, p_tx)?;
        let base = baselines(&ctx, &mut rng);
        let rep: PgReport = pg_solve(&ctx, base.equal.clone(), cfg.beamformer.params())?;
        let fast = ctx.user_rates(&rep.state);
        let slow = link_rates(&inputs, &rep.state)?;
        for (a, b) in fast.iter().zip(&slow) {
            run.rate_err = run.rate_err.max(rel_err(*a, *b));
        }
        run.dips += rep.dips;
        run.steps += rep.iterations;
        let states: [(&'static str, &BeamformingState, usize, bool); 3] = [
            ("equal", &base.equal, 0, true),
            ("random", &base.random, 0, true),
            ("pg", &rep.state, rep.iterations, rep.converged),
        ];
        for (variant, st, iterations, converged) in states {
            run.feasible &= is_feasible(st);
            let rates = ctx.user_rates(st);
            run.rows.push(BeamRow {
                seed,
                snr_db: snr,
                p_tx_w: p_tx,
                variant,
                objective: ctx.objective(st),
                iterations,
                converged,
                delays: user_delays(&sc.catalog, &sc.profiles, &paths, &rates),
                rates,
            });
        }
        run.traces.push((snr, rep.trace));
    }
    Ok(run)
}

pub fn beamform_suite(cfg: &ScenarioConfig, out: &FsPath) -> Result<SuiteOutput> {
    let surface = SurfaceModel::build(cfg)?;
    let seeds: Vec<u64> = (0..cfg.sweeps.seeds as u64).map(|i| derive_seed(cfg.seed, i)).collect();
    let runs: Vec<BeamRun> = seeds.par_iter().map(|&s| beam_run(cfg, &surface, s)).collect::<Result<_>>()?;

    let mut states = CsvSink::create(
        out,
        "beamform_states",
        &["seed", "snr_db", "p_tx_w", "variant", "objective", "iterations", "converged", "user", "rate_bps", "delay_s"],
    )?;
    let mut trace = CsvSink::create(out, "beamform_trace", &["seed", "snr_db", "iteration", "objective"])?;
    let (mut feasible, mut rate_err, mut dips, mut steps) = (true, 0.0f64, 0, 0);
    for (run, &seed) in runs.iter().zip(&seeds) {
        for r in &run.rows {
            for (l, (rate, d)) in r.rates.iter().zip(&r.delays).enumerate() {
                states.row(&csv_row![
                    r.seed,
                    r.snr_db,
                    r.p_tx_w,
                    r.variant,
                    r.objective,
                    r.iterations,
                    r.converged,
                    l,
                    rate,
                    d
                ])?;
            }
        }
        for (snr, t) in &run.traces {
            for (i, j) in t.iter().enumerate() {
                trace.row(&csv_row![seed, snr, i, j])?;
            }
        }
        feasible &= run.feasible;
        rate_err = rate_err.max(run.rate_err);
        dips += run.dips;
        steps += run.steps;
    }
    let mut res = SuiteOutput::default();
    res.files.push(states.finish()?);
    res.files.push(trace.finish()?);
    res.audits.push(Audit::check("beam_feasible", feasible, "weights on simplex, powers on sphere".into()));
    res.audits.push(Audit::check(
        "beam_rate_consistency",
        rate_err <= AUDIT_TOL,
        format!("largest relative deviation {rate_err:.3e}"),
    ));
    res.audits.push(Audit::check(
        "beam_trace_dips",
        dips as f64 <= 0.05 * steps.max(1) as f64,
        format!("{dips} dips in {steps} steps"),
    ));
    res.files.push(write_plot_script(
        out,
        "beamform_sweeps",
        &[
            PlotSpec { file: "beamform_states", x: "snr_db", y: "objective", group: &["variant"], query: None },
            PlotSpec {
                file: "beamform_states",
                x: "user",
                y: "rate_bps",
                group: &["variant"],
                query: Some("snr_db == 0"),
            },
            PlotSpec {
                file: "beamform_trace",
                x: "iteration",
                y: "objective",
                group: &["seed"],
                query: Some("snr_db == 0"),
            },
        ],
    )?);
    Ok(res)
}

// ----------------------------------------------------------------- e2e

pub fn e2e_suite(cfg: &ScenarioConfig, out: &FsPath) -> Result<SuiteOutput> {
    let surface = SurfaceModel::build(cfg)?;
    let variants: &[(&str, bool)] =
        if cfg.mobility.optimize_beams { &[("pg", true), ("frozen", false)] } else { &[("frozen", false)] };
    let mut jobs = Vec::new();
    for i in 0..cfg.sweeps.e2e_seeds as u64 {
        for &(name, opt) in variants {
            jobs.push((derive_seed(cfg.seed, i), name, opt));
        }
    }
    let runs: Vec<(Scenario, RunRecord)> = jobs
        .par_iter()
        .map(|&(seed, _, opt)| {
            let sc = scenario_for(cfg, seed)?;
            let rec = run_two_timescale(cfg, &surface, sc.clone(), RunOptions { optimize_beams: opt })?;
            Ok((sc, rec))
        })
        .collect::<Result<_>>()?;

    let mut ticks = CsvSink::create(
        out,
        "e2e_ticks",
        &["seed", "variant", "tick", "delay_s", "resolved", "infeasible", "objective", "pg_iterations", "pg_converged"],
    )?;
    let mut users = CsvSink::create(
        out,
        "e2e_users",
        &[
            "seed",
            "variant",
            "tick",
            "user",
            "x_m",
            "y_m",
            "z_m",
            "rate_bps",
            "omega_bits",
            "n_prefetch3d",
            "n_cached2d",
            "n_remote2d",
            "n_remote3d",
        ],
    )?;
    let mut worst: f64 = 0.0;
    let mut outside = 0;
    let [rx, ry, rz] = cfg.room.size_m;
    for ((seed, name, _), (sc, rec)) in jobs.iter().zip(&runs) {
        worst = worst.max(audit_delays(rec, sc));
        for t in &rec.ticks {
            ticks.row(&csv_row![
                seed,
                name,
                t.tick,
                t.delay,
                t.resolved,
                t.infeasible,
                t.objective,
                t.pg_iterations,
                t.pg_converged
            ])?;
            for (l, p) in t.positions.iter().enumerate() {
                if !(p[0] >= 0.0 && p[0] <= rx && p[1] >= 0.0 && p[1] <= ry && p[2] >= 0.0 && p[2] <= rz) {
                    outside += 1;
                }
                let [a, b, c, d] = t.path_counts(l);
                users.row(&csv_row![seed, name, t.tick, l, p[0], p[1], p[2], t.rates[l], t.omega[l], a, b, c, d])?;
            }
        }
    }
    let mut res = SuiteOutput::default();
    res.files.push(ticks.finish()?);
    res.files.push(users.finish()?);
    res.audits.push(Audit::check(
        "e2e_delay_recompute",
        worst <= AUDIT_TOL,
        format!("largest relative deviation {worst:.3e}"),
    ));
    res.audits.push(Audit::check("e2e_room_bounds", outside == 0, format!("{outside} positions outside the room")));
    if cfg.output.dump_matrices {
        if let Some((sc, _)) = runs.first() {
            res.files.extend(dump_matrices(&surface, sc, out)?);
        }
    }
    res.files.push(write_plot_script(
        out,
        "e2e",
        &[
            PlotSpec { file: "e2e_ticks", x: "tick", y: "delay_s", group: &["variant"], query: None },
            PlotSpec { file: "e2e_users", x: "tick", y: "rate_bps", group: &["variant", "user"], query: None },
        ],
    )?);
    Ok(res)
}

/// Z_u, Ξ_u and the equal-weight pattern m_u at the initial positions.
fn dump_matrices(surface: &SurfaceModel, sc: &Scenario, out: &FsPath) -> Result<Vec<std::path::PathBuf>> {
    let dir = out.join("matrices");
    std::fs::create_dir_all(&dir)?;
    let channel = sc.channel(surface)?;
    let users = sc.catalog.users();
    let probe = BeamContext::new(&sc.inputs(surface, &channel), &vec![1.0; users], Default::default(), sc.p_tx_w)?;
    let eq = probe.equal_state();
    let mut files = Vec::new();
    for u in 0..surface.plan.len() {
        let bases = PatternBases::compute(&surface.geometry, &channel.theta, &channel.phi, surface.plan.wavelength(u));
        let m = synthesize_pattern(&eq.weights, &bases, u);
        let col = DMatrix::from_iterator(m.len(), 1, m.iter().map(|&x| Complex64::new(x, 0.0)));
        for (name, mat) in [("z", &surface.coupling.z[u]), ("xi", &surface.coupling.xi[u]), ("m", &col)] {
            let p = dir.join(format!("{name}_u{u}.csv"));
            write_complex_csv(std::fs::File::create(&p)?, mat)?;
            files.push(p);
        }
    }
    Ok(files)
}
