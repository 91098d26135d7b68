//! Heterogeneous prefetch/render/offload selection as a multiple-choice
//! multidimensional knapsack: one path per (user, FoV), per-user memory and
//! power budgets, deadline masks on the link paths.

mod brute;
mod dca;
mod generate;
mod greedy;
pub mod lp;

pub use brute::{brute_force_mmkp, BRUTE_FORCE_LIMIT};
pub use dca::{dca_cccp, lp_relaxation, relax_and_linearize, round_and_repair, DcaParams};
pub use generate::{generate_instance, HeteroSpec};
pub use greedy::{greedy_mmkp, ScoreParams};

use crate::error::{Error, Result};
use crate::latency::{
    delay_table, gain_table, meets_deadline, resource_costs, total_delay, DeviceProfile, FovCatalog, Path,
    PathAssignment, PathTable, ResourceCosts, PATHS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MmkpInstance {
    pub users: usize,
    pub fovs: usize,
    /// Probability-weighted delay gains g_{l,i,j} (s).
    pub gain: PathTable,
    pub costs: ResourceCosts,
    pub mem_budget: Vec<f64>,
    pub pow_budget: Vec<f64>,
    /// Deadline mask, same layout as [`PathTable`].
    pub allowed: Vec<bool>,
    /// All-remote-3D average delay.
    pub baseline_delay: f64,
}

impl MmkpInstance {
    /// Builds the knapsack from the latency model. With `enforce_deadlines`
    /// the link paths that miss τ are masked out.
    pub fn from_model(
        catalog: &FovCatalog,
        profiles: &[DeviceProfile],
        rates: &[f64],
        enforce_deadlines: bool,
    ) -> Result<Self> {
        let (users, fovs) = (catalog.users(), catalog.fovs());
        if profiles.len() != users || rates.len() != users {
            return Err(Error::Domain(format!(
                "{users} users but {} profiles and {} rates",
                profiles.len(),
                rates.len()
            )));
        }
        for p in profiles {
            p.validate()?;
        }
        let delays = delay_table(catalog, profiles, rates);
        let gain = gain_table(catalog, profiles, rates);
        let costs = resource_costs(catalog, profiles);
        let mut allowed = vec![true; users * fovs * 4];
        if enforce_deadlines {
            for l in 0..users {
                for i in 0..fovs {
                    for j in PATHS {
                        allowed[gain.idx(l, i, j.index())] = meets_deadline(catalog, &profiles[l], rates[l], l, i, j);
                    }
                }
            }
        }
        let baseline_delay = total_delay(&PathAssignment::uniform(users, fovs, Path::Remote3D), &delays, catalog);
        Ok(Self {
            users,
            fovs,
            gain,
            costs,
            mem_budget: profiles.iter().map(|p| p.mem_bits).collect(),
            pow_budget: profiles.iter().map(|p| p.p_bar).collect(),
            allowed,
            baseline_delay,
        })
    }

    pub fn is_allowed(&self, l: usize, i: usize, j: Path) -> bool {
        self.allowed[self.gain.idx(l, i, j.index())]
    }

    /// Errors naming the first (l, i) whose remote-3D path misses the deadline.
    pub fn check_baseline(&self) -> Result<()> {
        for l in 0..self.users {
            for i in 0..self.fovs {
                if !self.is_allowed(l, i, Path::Remote3D) {
                    return Err(Error::Infeasible(format!(
                        "user {l} FoV {i}: remote 3D transmission misses the deadline"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Budget-normalized efficiency ρ = g / (ε + C^m/mem + C^p/P̄).
    pub fn score(&self, l: usize, i: usize, j: Path, eps: f64) -> f64 {
        let cm = self.costs.mem.get(l, i, j) / self.mem_budget[l];
        let cp = self.costs.pow.get(l, i, j) / self.pow_budget[l];
        self.gain.get(l, i, j) / (eps + cm + cp)
    }

    /// Per-user (memory, power) use of a possibly relaxed assignment.
    pub fn usage(&self, x: &PathAssignment) -> (Vec<f64>, Vec<f64>) {
        let mut mem = vec![0.0; self.users];
        let mut pow = vec![0.0; self.users];
        for l in 0..self.users {
            for i in 0..self.fovs {
                for j in PATHS {
                    let v = x.get(l, i, j);
                    if v != 0.0 {
                        mem[l] += self.costs.mem.get(l, i, j) * v;
                        pow[l] += self.costs.pow.get(l, i, j) * v;
                    }
                }
            }
        }
        (mem, pow)
    }

    pub fn within_budgets(&self, x: &PathAssignment) -> bool {
        let (mem, pow) = self.usage(x);
        (0..self.users).all(|l| fits(mem[l], self.mem_budget[l]) && fits(pow[l], self.pow_budget[l]))
    }

    /// Binary, one path per item, budgets and deadline masks respected.
    pub fn is_feasible(&self, x: &PathAssignment) -> bool {
        if x.relaxed || x.validate().is_err() || x.users != self.users || x.fovs != self.fovs {
            return false;
        }
        let masks_ok = (0..self.users).all(|l| (0..self.fovs).all(|i| self.is_allowed(l, i, x.path(l, i))));
        masks_ok && self.within_budgets(x)
    }

    /// Σ g x.
    pub fn gain_of(&self, x: &PathAssignment) -> f64 {
        let mut g = 0.0;
        for l in 0..self.users {
            for i in 0..self.fovs {
                for j in PATHS {
                    let v = x.get(l, i, j);
                    if v != 0.0 {
                        g += self.gain.get(l, i, j) * v;
                    }
                }
            }
        }
        g
    }

    /// T̄ = baseline − gain / L.
    pub fn delay_of_gain(&self, gain: f64) -> f64 {
        self.baseline_delay - gain / self.users as f64
    }

    pub(crate) fn report(&self, assignment: PathAssignment) -> SolverReport {
        let objective_gain = self.gain_of(&assignment);
        SolverReport {
            total_delay: self.delay_of_gain(objective_gain),
            assignment,
            objective_gain,
            iterations: 0,
            converged: true,
            bound: None,
            history: Vec::new(),
            repaired: 0,
            fallback: false,
        }
    }
}

/// Budget check with a relative slack for float accumulation.
pub(crate) fn fits(used: f64, budget: f64) -> bool {
    used <= budget * (1.0 + 1e-12) + 1e-12
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub assignment: PathAssignment,
    pub objective_gain: f64,
    pub total_delay: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Delay of the plain LP relaxation, a lower bound on any binary delay.
    pub bound: Option<f64>,
    /// Penalized objective per iterate (DCA only).
    pub history: Vec<f64>,
    /// Items reverted to remote 3D by the repair pass.
    pub repaired: usize,
    /// Rounding could not be repaired; the warm start was returned.
    pub fallback: bool,
}

/// Σ x(1 − x): zero exactly on binary assignments.
pub fn integrality_residual(x: &PathAssignment) -> f64 {
    x.x.iter().map(|v| v * (1.0 - v)).sum()
}

/// Mean budget-to-usage ratios (β_m, β_p) of a reference (relaxed)
/// solution; users with zero usage are skipped.
pub fn budget_ratios(inst: &MmkpInstance, reference: &PathAssignment) -> (f64, f64) {
    let (mem, pow) = inst.usage(reference);
    let ratio = |used: &[f64], budget: &[f64]| {
        let v: Vec<f64> = used.iter().zip(budget).filter(|(u, _)| **u > 0.0).map(|(u, b)| b / u).collect();
        if v.is_empty() {
            f64::INFINITY
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    (ratio(&mem, &inst.mem_budget), ratio(&pow, &inst.pow_budget))
}
