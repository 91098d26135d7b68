use super::{fits, MmkpInstance, SolverReport};
use crate::error::Result;
use crate::latency::{Path, PathAssignment};

/// Constants of the efficiency score ρ = g / (ε + α₁C^m + α₂C^p).
///
/// α₁ and α₂ are per user (1/mem and 1/P̄); only ε is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub eps: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { eps: 1e-9 }
    }
}

/// Single-pass greedy: start from all remote 3D, visit candidates by
/// descending ρ and switch an item when the switch fits the budgets and
/// raises its gain.
pub fn greedy_mmkp(inst: &MmkpInstance, params: ScoreParams) -> Result<SolverReport> {
    inst.check_baseline()?;
    let mut cand: Vec<(f64, usize, usize, Path)> = Vec::new();
    for l in 0..inst.users {
        for i in 0..inst.fovs {
            for j in [Path::Prefetched3D, Path::Cached2D, Path::Remote2D] {
                if inst.is_allowed(l, i, j) {
                    cand.push((inst.score(l, i, j, params.eps), l, i, j));
                }
            }
        }
    }
    // descending ρ, ties in (l, i, j) order
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));

    let mut current = vec![vec![Path::Remote3D; inst.fovs]; inst.users];
    let mut mem = vec![0.0; inst.users];
    let mut pow = vec![0.0; inst.users];
    let mut swaps = 0;
    for &(_, l, i, j) in &cand {
        let c = current[l][i];
        if inst.gain.get(l, i, j) <= inst.gain.get(l, i, c) {
            continue;
        }
        let new_mem = mem[l] - inst.costs.mem.get(l, i, c) + inst.costs.mem.get(l, i, j);
        let new_pow = pow[l] - inst.costs.pow.get(l, i, c) + inst.costs.pow.get(l, i, j);
        if fits(new_mem, inst.mem_budget[l]) && fits(new_pow, inst.pow_budget[l]) {
            current[l][i] = j;
            mem[l] = new_mem;
            pow[l] = new_pow;
            swaps += 1;
        }
    }
    let mut rep = inst.report(PathAssignment::from_paths(&current));
    rep.iterations = swaps;
    Ok(rep)
}
