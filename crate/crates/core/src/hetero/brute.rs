use super::{fits, MmkpInstance, SolverReport};
use crate::error::{Error, Result};
use crate::latency::{PathAssignment, PATHS};

/// Largest 4^(L·V) the oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 2e6;

/// Exact optimum by enumerating every joint assignment. The first optimum
/// in odometer order over (l, i) wins ties.
pub fn brute_force_mmkp(inst: &MmkpInstance) -> Result<SolverReport> {
    let items = inst.users * inst.fovs;
    let count = 4f64.powi(items as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("4^{items} = {count:.3e} assignments")));
    }
    let mut choice = vec![0usize; items];
    let mut best: Option<(f64, Vec<usize>)> = None;
    'outer: loop {
        let feasible = choice.iter().enumerate().all(|(k, &j)| inst.is_allowed(k / inst.fovs, k % inst.fovs, PATHS[j]));
        if feasible {
            let mut ok = true;
            let mut gain = 0.0;
            for l in 0..inst.users {
                let (mut mem, mut pow) = (0.0, 0.0);
                for i in 0..inst.fovs {
                    let j = PATHS[choice[l * inst.fovs + i]];
                    mem += inst.costs.mem.get(l, i, j);
                    pow += inst.costs.pow.get(l, i, j);
                    gain += inst.gain.get(l, i, j);
                }
                if !fits(mem, inst.mem_budget[l]) || !fits(pow, inst.pow_budget[l]) {
                    ok = false;
                    break;
                }
            }
            if ok && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, choice.clone()));
            }
        }
        for k in (0..items).rev() {
            choice[k] += 1;
            if choice[k] < 4 {
                continue 'outer;
            }
            choice[k] = 0;
        }
        break;
    }
    let (_, c) = best.ok_or_else(|| Error::Infeasible("no assignment satisfies budgets and deadlines".into()))?;
    let paths: Vec<Vec<_>> =
        (0..inst.users).map(|l| (0..inst.fovs).map(|i| PATHS[c[l * inst.fovs + i]]).collect()).collect();
    let mut rep = inst.report(PathAssignment::from_paths(&paths));
    rep.iterations = count as usize;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::small_instance;
    use super::*;

    #[test]
    fn single_item_picks_best_feasible_path() {
        let full = small_instance(2);
        let mut inst = full.clone();
        inst.users = 1;
        inst.fovs = 1;
        inst.gain.users = 1;
        inst.gain.fovs = 1;
        inst.gain.data = full.gain.data[..4].to_vec();
        inst.costs.mem.users = 1;
        inst.costs.mem.fovs = 1;
        inst.costs.mem.data = full.costs.mem.data[..4].to_vec();
        inst.costs.pow.users = 1;
        inst.costs.pow.fovs = 1;
        inst.costs.pow.data = full.costs.pow.data[..4].to_vec();
        inst.allowed = full.allowed[..4].to_vec();
        inst.mem_budget.truncate(1);
        inst.pow_budget.truncate(1);
        let r = brute_force_mmkp(&inst).unwrap();
        let best = PATHS
            .iter()
            .filter(|&&j| {
                inst.is_allowed(0, 0, j)
                    && inst.costs.mem.get(0, 0, j) <= inst.mem_budget[0]
                    && inst.costs.pow.get(0, 0, j) <= inst.pow_budget[0]
            })
            .map(|&j| inst.gain.get(0, 0, j))
            .fold(f64::MIN, f64::max);
        assert_eq!(r.objective_gain, best);
        assert!(inst.is_feasible(&r.assignment));
    }

    #[test]
    fn too_large_is_rejected() {
        let mut inst = small_instance(0);
        inst.fovs = 11;
        assert!(matches!(brute_force_mmkp(&inst), Err(Error::TooLarge(_))));
    }
}
