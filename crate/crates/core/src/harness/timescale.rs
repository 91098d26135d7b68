//! Long/short timescale alternation: knapsack placement on long ticks,
//! beam re-optimization under mobility on every short tick.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ScenarioConfig};
use super::scenario::{Scenario, SurfaceModel};
use crate::beamformer::{pg_solve, BeamContext, BeamformingState};
use crate::error::{Error, Result};
use crate::hetero::{dca_cccp, greedy_mmkp, MmkpInstance, ScoreParams};
use crate::latency::{delay_table, omega_weights, path_delay, total_delay, Path, PathAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Re-run the beam optimizer every tick; otherwise keep the equal state.
    pub optimize_beams: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub positions: Vec<[f64; 3]>,
    /// Rates after this tick's beam update (bit/s).
    pub rates: Vec<f64>,
    pub omega: Vec<f64>,
    /// Committed path of every (l, i).
    pub paths: Vec<Vec<Path>>,
    pub delay: f64,
    /// Placement was re-solved on this tick.
    pub resolved: bool,
    /// Re-solve failed; the previous assignment was kept.
    pub infeasible: bool,
    pub objective: f64,
    pub pg_iterations: usize,
    pub pg_converged: bool,
}

impl TickRecord {
    /// FoV counts per path for user `l`.
    pub fn path_counts(&self, l: usize) -> [usize; 4] {
        let mut c = [0; 4];
        for p in &self.paths[l] {
            c[p.index()] += 1;
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub ticks: Vec<TickRecord>,
    pub all_converged: bool,
    /// Not part of any CSV output.
    pub wall_time: Duration,
    pub final_state: BeamformingState,
}

/// Solves the placement problem with the configured algorithm.
pub fn solve_placement(cfg: &ScenarioConfig, sc: &Scenario, rates: &[f64]) -> Result<PathAssignment> {
    let inst = MmkpInstance::from_model(&sc.catalog, &sc.profiles, rates, cfg.mobility.deadline_mode.enforced())?;
    let score = ScoreParams { eps: cfg.solver.score_eps };
    let greedy = greedy_mmkp(&inst, score)?;
    match cfg.solver.algorithm {
        Algorithm::H1 => Ok(greedy.assignment),
        Algorithm::H3 => Ok(dca_cccp(&inst, cfg.solver.dca_params(), &greedy.assignment)?.assignment),
        Algorithm::H2 => Err(Error::Config("the two-timescale loop needs a binary assignment; use h1 or h3".into())),
    }
}

pub fn run_two_timescale(
    cfg: &ScenarioConfig,
    surface: &SurfaceModel,
    mut sc: Scenario,
    opts: RunOptions,
) -> Result<RunRecord> {
    let start = Instant::now();
    let users = sc.catalog.users();
    let fovs = sc.catalog.fovs();
    let params = cfg.beamformer.params();
    let mut state: Option<BeamformingState> = None;
    let mut assignment: Option<PathAssignment> = None;
    let mut ticks = Vec::with_capacity(cfg.mobility.ticks);
    let mut all_converged = true;
    for t in 0..cfg.mobility.ticks.max(1) {
        if t > 0 {
            sc.mobility.step(cfg.mobility.tick_s);
        }
        let channel = sc.channel(surface)?;
        let inputs = sc.inputs(surface, &channel);
        // rates of the current beams on the current channel
        let probe = BeamContext::new(&inputs, &vec![1.0; users], cfg.beamformer.weighting, sc.p_tx_w)?;
        let current = state.clone().unwrap_or_else(|| probe.equal_state());
        let rates_now = probe.user_rates(&current);

        let resolved = t % cfg.mobility.long_every == 0;
        let mut infeasible = false;
        if resolved {
            match solve_placement(cfg, &sc, &rates_now) {
                Ok(x) => assignment = Some(x),
                Err(e @ (Error::Infeasible(_) | Error::Lp(_))) => {
                    log::warn!("tick {t}: placement failed ({e}); keeping the previous assignment");
                    infeasible = true;
                }
                Err(e) => return Err(e),
            }
        }
        let committed = assignment.clone().unwrap_or_else(|| PathAssignment::uniform(users, fovs, Path::Remote3D));
        let omega = omega_weights(&committed, &sc.catalog)?;

        let ctx = BeamContext::new(&inputs, &omega, cfg.beamformer.weighting, sc.p_tx_w)?;
        let (next, iters, converged) = if opts.optimize_beams {
            let rep = pg_solve(&ctx, current, params)?;
            (rep.state, rep.iterations, rep.converged)
        } else {
            (current, 0, true)
        };
        all_converged &= converged;
        let rates = ctx.user_rates(&next);
        let delay = total_delay(&committed, &delay_table(&sc.catalog, &sc.profiles, &rates), &sc.catalog);
        ticks.push(TickRecord {
            tick: t,
            positions: sc.mobility.positions().iter().map(|p| [p.x, p.y, p.z]).collect(),
            objective: ctx.objective(&next),
            rates,
            omega,
            paths: committed.paths(),
            delay,
            resolved,
            infeasible,
            pg_iterations: iters,
            pg_converged: converged,
        });
        state = Some(next);
    }
    Ok(RunRecord { ticks, all_converged, wall_time: start.elapsed(), final_state: state.expect("at least one tick") })
}

/// Recomputes T̄ of every tick from its recorded paths and rates through the
/// per-path delay formula; returns the largest relative deviation.
pub fn audit_delays(rec: &RunRecord, sc: &Scenario) -> f64 {
    let mut worst: f64 = 0.0;
    for t in &rec.ticks {
        let users = t.paths.len();
        let mut acc = 0.0;
        for (l, row) in t.paths.iter().enumerate() {
            for (i, &p) in row.iter().enumerate() {
                acc += sc.catalog.pi[l][i] * path_delay(&sc.catalog, &sc.profiles[l], t.rates[l], l, i, p);
            }
        }
        let recomputed = acc / users as f64;
        let rel = (recomputed - t.delay).abs() / t.delay.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
    }
    worst
}

/// Alternates placement and beam optimization with users held still.
/// Returns the round in which the assignment first repeats, if it does
/// within `max_rounds`.
pub fn alternate_static(
    cfg: &ScenarioConfig,
    surface: &SurfaceModel,
    sc: &Scenario,
    max_rounds: usize,
) -> Result<Option<usize>> {
    let channel = sc.channel(surface)?;
    let inputs = sc.inputs(surface, &channel);
    let users = sc.catalog.users();
    let probe = BeamContext::new(&inputs, &vec![1.0; users], cfg.beamformer.weighting, sc.p_tx_w)?;
    let mut state = probe.equal_state();
    let mut rates = probe.user_rates(&state);
    let mut prev: Option<Vec<Vec<Path>>> = None;
    for round in 1..=max_rounds {
        let x = solve_placement(cfg, sc, &rates)?;
        let paths = x.paths();
        if prev.as_ref() == Some(&paths) {
            return Ok(Some(round));
        }
        let omega = omega_weights(&x, &sc.catalog)?;
        let ctx = BeamContext::new(&inputs, &omega, cfg.beamformer.weighting, sc.p_tx_w)?;
        state = pg_solve(&ctx, state, cfg.beamformer.params())?.state;
        rates = ctx.user_rates(&state);
        prev = Some(paths);
    }
    Ok(None)
}

/// Builds a scenario from a derived seed.
pub fn scenario_for(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    Scenario::build(cfg, &mut rng)
}
