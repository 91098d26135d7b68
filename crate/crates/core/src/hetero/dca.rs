//! Binary relaxation with a concave integrality penalty, solved by
//! successive linearization (convex-concave procedure).
//!
//! Penalized objective: F(x) = −Σ g x + λ Σ x(1 − x). Linearizing the
//! concave term at x⁽ᵗ⁾ gives an LP whose optimum x⁽ᵗ⁺¹⁾ satisfies
//! F(x⁽ᵗ⁺¹⁾) ≤ F(x⁽ᵗ⁾).

use super::lp::{self, LpProblem, RowKind};
use super::{fits, MmkpInstance, SolverReport};
use crate::error::{Error, Result};
use crate::latency::{Path, PathAssignment, PATHS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaParams {
    /// Penalty weight; `None` uses 10·max|g|.
    pub lambda: Option<f64>,
    /// Stop when max |x⁽ᵗ⁺¹⁾ − x⁽ᵗ⁾| ≤ eps.
    pub eps: f64,
    pub t_max: usize,
    /// ε of the repair score.
    pub score_eps: f64,
}

impl Default for DcaParams {
    fn default() -> Self {
        Self { lambda: None, eps: 1e-6, t_max: 50, score_eps: 1e-9 }
    }
}

pub fn default_lambda(inst: &MmkpInstance) -> f64 {
    10.0 * inst.gain.data.iter().fold(0.0f64, |a, g| a.max(g.abs()))
}

/// LP of one user over its allowed (i, j) with the per-item simplex and the
/// two budget rows. Returns the problem and the flat index of each variable.
fn build_user_lp(inst: &MmkpInstance, l: usize, cost: &impl Fn(usize) -> f64) -> (LpProblem, Vec<usize>) {
    let vars: Vec<usize> = (0..inst.fovs)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| inst.gain.idx(l, i, j))
        .filter(|&k| inst.allowed[k])
        .collect();
    let mut p = LpProblem::new(vars.len());
    for (v, &k) in vars.iter().enumerate() {
        p.cost[v] = cost(k);
    }
    let mut v = 0;
    let mut mem = Vec::new();
    let mut pow = Vec::new();
    for i in 0..inst.fovs {
        let mut row = Vec::new();
        while v < vars.len() && vars[v] / 4 == l * inst.fovs + i {
            let k = vars[v];
            row.push((v, 1.0));
            if inst.costs.mem.data[k] != 0.0 {
                mem.push((v, inst.costs.mem.data[k]));
            }
            if inst.costs.pow.data[k] != 0.0 {
                pow.push((v, inst.costs.pow.data[k]));
            }
            v += 1;
        }
        p.add_row(row, RowKind::Eq, 1.0);
    }
    p.add_row(mem, RowKind::Le, inst.mem_budget[l]);
    p.add_row(pow, RowKind::Le, inst.pow_budget[l]);
    (p, vars)
}

/// Budgets and objective are per user, so the LP splits into one block per user.
fn solve_lp(inst: &MmkpInstance, cost: impl Fn(usize) -> f64) -> Result<PathAssignment> {
    let mut x = vec![0.0; inst.allowed.len()];
    for l in 0..inst.users {
        let (p, vars) = build_user_lp(inst, l, &cost);
        let sol = lp::solve(&p)?;
        for (v, &k) in vars.iter().enumerate() {
            x[k] = sol.x[v].clamp(0.0, 1.0);
        }
    }
    Ok(PathAssignment { users: inst.users, fovs: inst.fovs, x, relaxed: true })
}

/// Plain LP relaxation (λ = 0): maximizes Σ g x over the relaxed polytope.
pub fn lp_relaxation(inst: &MmkpInstance) -> Result<SolverReport> {
    let x = solve_lp(inst, |k| -inst.gain.data[k])?;
    let mut rep = inst.report(x);
    rep.iterations = 1;
    rep.bound = Some(rep.total_delay);
    Ok(rep)
}

/// F(x) = −Σ g x + λ Σ x(1 − x).
pub fn penalized_objective(inst: &MmkpInstance, x: &PathAssignment, lambda: f64) -> f64 {
    x.x.iter().zip(&inst.gain.data).map(|(&v, &g)| -g * v + lambda * v * (1.0 - v)).sum()
}

fn surrogate_step(inst: &MmkpInstance, xt: &PathAssignment, lambda: f64) -> Result<PathAssignment> {
    solve_lp(inst, |k| -inst.gain.data[k] + lambda * (1.0 - 2.0 * xt.x[k]))
}

fn check_warm(inst: &MmkpInstance, warm: &PathAssignment) -> Result<()> {
    warm.validate()?;
    if warm.users != inst.users || warm.fovs != inst.fovs {
        return Err(Error::Domain("warm start has the wrong shape".into()));
    }
    let masked = warm.x.iter().zip(&inst.allowed).any(|(&v, &ok)| !ok && v > 1e-9);
    if masked || !inst.within_budgets(warm) {
        return Err(Error::Infeasible("warm start violates budgets or deadlines".into()));
    }
    Ok(())
}

/// One linearization at the warm start followed by one surrogate LP.
///
/// The report holds the (possibly fractional) surrogate optimum; `bound` is
/// the plain relaxation delay.
pub fn relax_and_linearize(inst: &MmkpInstance, lambda: f64, warm: &PathAssignment) -> Result<SolverReport> {
    check_warm(inst, warm)?;
    let bound = lp_relaxation(inst)?.total_delay;
    let x = surrogate_step(inst, warm, lambda)?;
    let history = vec![penalized_objective(inst, warm, lambda), penalized_objective(inst, &x, lambda)];
    let mut rep = inst.report(x);
    rep.iterations = 1;
    rep.bound = Some(bound);
    rep.history = history;
    Ok(rep)
}

/// Per-item argmax rounding (lowest path index on ties), then reverts the
/// lowest-ρ non-baseline items of over-budget users to remote 3D.
///
/// Returns `None` when a user stays over budget with nothing left to revert.
pub fn round_and_repair(inst: &MmkpInstance, x: &PathAssignment, score_eps: f64) -> Option<(PathAssignment, usize)> {
    let mut paths = vec![vec![Path::Remote3D; inst.fovs]; inst.users];
    for (l, row) in paths.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate() {
            let mut best: Option<(f64, Path)> = None;
            for j in PATHS {
                if !inst.is_allowed(l, i, j) {
                    continue;
                }
                let v = x.get(l, i, j);
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, j));
                }
            }
            *slot = best.map(|b| b.1)?;
        }
    }
    let mut repaired = 0;
    for l in 0..inst.users {
        loop {
            let (mut mem, mut pow) = (0.0, 0.0);
            for i in 0..inst.fovs {
                mem += inst.costs.mem.get(l, i, paths[l][i]);
                pow += inst.costs.pow.get(l, i, paths[l][i]);
            }
            if fits(mem, inst.mem_budget[l]) && fits(pow, inst.pow_budget[l]) {
                break;
            }
            let victim = (0..inst.fovs)
                .filter(|&i| paths[l][i] != Path::Remote3D && inst.is_allowed(l, i, Path::Remote3D))
                .min_by(|&a, &b| {
                    inst.score(l, a, paths[l][a], score_eps)
                        .total_cmp(&inst.score(l, b, paths[l][b], score_eps))
                        .then(a.cmp(&b))
                })?;
            paths[l][victim] = Path::Remote3D;
            repaired += 1;
        }
    }
    Some((PathAssignment::from_paths(&paths), repaired))
}

/// Convex-concave iterations from `warm`, then rounding and repair.
pub fn dca_cccp(inst: &MmkpInstance, params: DcaParams, warm: &PathAssignment) -> Result<SolverReport> {
    check_warm(inst, warm)?;
    let lambda = params.lambda.unwrap_or_else(|| default_lambda(inst));
    let bound = lp_relaxation(inst)?.total_delay;
    let mut x = warm.clone();
    x.relaxed = true;
    let mut history = vec![penalized_objective(inst, &x, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.t_max {
        let next = surrogate_step(inst, &x, lambda)?;
        iterations += 1;
        let step = next.x.iter().zip(&x.x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        history.push(penalized_objective(inst, &next, lambda));
        x = next;
        if step <= params.eps {
            converged = true;
            break;
        }
    }
    let (assignment, repaired, fallback) = match round_and_repair(inst, &x, params.score_eps) {
        Some((a, r)) => (a, r, false),
        None => {
            log::warn!("rounding could not be repaired; returning the warm start");
            let mut w = warm.clone();
            if w.relaxed {
                w = round_and_repair(inst, warm, params.score_eps)
                    .map(|(a, _)| a)
                    .ok_or_else(|| Error::Infeasible("neither rounding nor warm start is repairable".into()))?;
            }
            (w, 0, true)
        }
    };
    let mut rep = inst.report(assignment);
    rep.iterations = iterations;
    rep.converged = converged;
    rep.bound = Some(bound);
    rep.history = history;
    rep.repaired = repaired;
    rep.fallback = fallback;
    Ok(rep)
}
