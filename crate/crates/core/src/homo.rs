//! Homogeneous caching/rendering policy: every FoV shares sizes, rendering
//! intensity and request probability, so the decision collapses to three
//! counts (p2D, p3D, r).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    /// o/f ≥ (α−1)/R: downloading rendered 3D beats downloading 2D and rendering.
    Remote3D,
    OnDeviceRender,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Remote3D => "remote3d",
            Zone::OnDeviceRender => "on_device",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoInstance {
    pub v: usize,
    /// 2D FoV size (bit).
    pub q2d: f64,
    /// 3D/2D size ratio.
    pub alpha: f64,
    pub rate: f64,
    pub f: f64,
    pub o: f64,
    /// Memory in 2D-FoV slots.
    pub delta: usize,
    /// Number of FoVs the power budget lets the device render.
    pub q_max: usize,
    pub tau: f64,
}

/// Parameters for deriving δ and Q_max from physical budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomoBudgets {
    pub p_bar: f64,
    pub zeta: f64,
    pub mem_bits: f64,
}

impl HomoInstance {
    /// Builds an instance with δ = ⌊mem/Q2D⌋ and
    /// Q_max = ⌊V P̄ τ / (ζ f² Q2D o)⌋.
    #[allow(clippy::too_many_arguments)]
    pub fn from_budgets(
        v: usize,
        q2d: f64,
        alpha: f64,
        rate: f64,
        f: f64,
        o: f64,
        tau: f64,
        b: HomoBudgets,
    ) -> Result<Self> {
        let q_max = (v as f64 * b.p_bar * tau / (b.zeta * f * f * q2d * o)).floor();
        let delta = (b.mem_bits / q2d).floor();
        if !(q_max >= 0.0) || !(delta >= 0.0) || !q_max.is_finite() || !delta.is_finite() {
            return Err(Error::Infeasible(format!("budgets give Q_max = {q_max}, δ = {delta}")));
        }
        let inst = Self { v, q2d, alpha, rate, f, o, delta: delta as usize, q_max: q_max as usize, tau };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v == 0 {
            return Err(Error::Domain("V must be positive".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::Domain(format!("α = {} is below 1", self.alpha)));
        }
        for (n, x) in [("Q2D", self.q2d), ("R", self.rate), ("f", self.f), ("o", self.o)] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Domain(format!("{n} must be positive, got {x}")));
            }
        }
        Ok(())
    }

    pub fn t2(&self) -> f64 {
        self.q2d * self.o / self.f
    }
    pub fn t3(&self) -> f64 {
        self.q2d / self.rate + self.t2()
    }
    pub fn t4(&self) -> f64 {
        self.alpha * self.q2d / self.rate
    }

    /// δ/α + Q_max ≤ V.
    pub fn budget_regime(&self) -> bool {
        self.delta as f64 / self.alpha + self.q_max as f64 <= self.v as f64
    }

    /// T² < T⁴(1 − 1/α): caching a 2D FoV beats the share of a 3D slot it displaces.
    pub fn render_regime(&self) -> bool {
        self.t2() < self.t4() * (1.0 - 1.0 / self.alpha)
    }

    /// (δ − min(δ, Q_max))/α is a whole number of 3D slots.
    pub fn integral_regime(&self) -> bool {
        let rest = (self.delta - self.delta.min(self.q_max)) as f64 / self.alpha;
        rest == rest.floor()
    }

    pub fn in_regime(&self) -> bool {
        self.budget_regime() && self.render_regime() && self.integral_regime()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomoPolicy {
    pub p2d: usize,
    pub p3d: usize,
    pub r: usize,
}

impl HomoPolicy {
    pub fn q(&self) -> usize {
        self.p2d.min(self.r)
    }
}

pub fn classify_zone(inst: &HomoInstance) -> Zone {
    if inst.o / inst.f >= (inst.alpha - 1.0) / inst.rate {
        Zone::Remote3D
    } else {
        Zone::OnDeviceRender
    }
}

pub fn check_policy(inst: &HomoInstance, p: &HomoPolicy) -> Result<()> {
    let mem = p.p2d as f64 + inst.alpha * p.p3d as f64;
    if mem > inst.delta as f64 * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!("memory: p2D + α·p3D = {mem} exceeds δ = {}", inst.delta)));
    }
    if p.p3d + p.r > inst.v {
        return Err(Error::Infeasible(format!("coverage: p3D + r = {} exceeds V = {}", p.p3d + p.r, inst.v)));
    }
    if p.r > inst.q_max {
        return Err(Error::Infeasible(format!("rendering: r = {} exceeds Q_max = {}", p.r, inst.q_max)));
    }
    Ok(())
}

/// Average delay of a policy.
pub fn evaluate_policy(inst: &HomoInstance, p: &HomoPolicy) -> Result<f64> {
    check_policy(inst, p)?;
    Ok(delay_unchecked(inst, p))
}

fn delay_unchecked(inst: &HomoInstance, p: &HomoPolicy) -> f64 {
    let q = p.q();
    let remote = inst.v - p.p3d - p.r;
    (q as f64 * inst.t2() + (p.r - q) as f64 * inst.t3() + remote as f64 * inst.t4()) / inst.v as f64
}

/// Closed-form optimum for in-regime instances.
pub fn closed_form_policy(inst: &HomoInstance) -> HomoPolicy {
    let p2d = inst.delta.min(inst.q_max);
    let r = match classify_zone(inst) {
        Zone::Remote3D => p2d,
        Zone::OnDeviceRender => inst.q_max,
    };
    let p3d = ((inst.delta - p2d) as f64 / inst.alpha).floor() as usize;
    HomoPolicy { p2d, p3d, r }
}

/// Optimal policy: closed form inside the regime, exhaustive search outside.
pub fn solve_closed_form(inst: &HomoInstance) -> Result<HomoPolicy> {
    Ok(solve(inst)?.policy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomoSolution {
    pub policy: HomoPolicy,
    pub delay: f64,
    pub zone: Zone,
    /// False when the instance fell back to enumeration.
    pub closed_form: bool,
}

pub fn solve(inst: &HomoInstance) -> Result<HomoSolution> {
    inst.validate()?;
    let zone = classify_zone(inst);
    if inst.in_regime() {
        let policy = closed_form_policy(inst);
        let delay = evaluate_policy(inst, &policy)?;
        return Ok(HomoSolution { policy, delay, zone, closed_form: true });
    }
    log::debug!(
        "homogeneous instance outside closed-form regime (δ={}, Q_max={}, V={}); enumerating",
        inst.delta,
        inst.q_max,
        inst.v
    );
    let policy = brute_force_policy(inst)?;
    let delay = evaluate_policy(inst, &policy)?;
    Ok(HomoSolution { policy, delay, zone, closed_form: false })
}

/// Upper bound on enumerated (p3D, p2D, r) triples.
pub const BRUTE_FORCE_LIMIT: f64 = 5e8;

/// Exhaustive search over all feasible (p3D, p2D, r).
///
/// Ties keep the first optimum in (p3D, p2D, r) lexicographic order.
pub fn brute_force_policy(inst: &HomoInstance) -> Result<HomoPolicy> {
    inst.validate()?;
    let max_p3d = ((inst.delta as f64 / inst.alpha).floor() as usize).min(inst.v);
    let work = (max_p3d + 1) as f64 * (inst.delta.min(inst.v) + 1) as f64 * (inst.q_max.min(inst.v) + 1) as f64;
    if work > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("{work:.3e} homogeneous policies to enumerate")));
    }
    let mut best = HomoPolicy { p2d: 0, p3d: 0, r: 0 };
    let mut best_delay = f64::INFINITY;
    for p3d in 0..=max_p3d {
        let mem_left = inst.delta as f64 - inst.alpha * p3d as f64;
        // 2D copies beyond the V − p3D FoVs that could use them change nothing
        let max_p2d = ((mem_left + 1e-9).floor().max(0.0) as usize).min(inst.v - p3d);
        let max_r = inst.q_max.min(inst.v - p3d);
        for p2d in 0..=max_p2d {
            for r in 0..=max_r {
                let p = HomoPolicy { p2d, p3d, r };
                let d = delay_unchecked(inst, &p);
                if d < best_delay {
                    best_delay = d;
                    best = p;
                }
            }
        }
    }
    Ok(best)
}

/// FoV counts per path: (prefetched 3D, cached 2D, downloaded 2D, remote 3D).
pub fn allocation_breakdown(p: &HomoPolicy, v: usize) -> Result<[usize; 4]> {
    let q = p.q();
    if p.p3d + p.r > v {
        return Err(Error::Infeasible(format!("p3D + r exceeds V = {v}")));
    }
    Ok([p.p3d, q, p.r - q, v - p.p3d - p.r])
}

/// δ at which the optimal-delay curve changes slope in a δ sweep: past it the
/// remaining remote FoVs are cheaper to cover with 3D prefetches than with
/// 2D slots (δ = α(V − Q_max) + Q_max for Q_max ≤ V).
pub fn delta_kink(v: usize, alpha: f64, q_max: usize) -> f64 {
    alpha * (v as f64 - q_max as f64) + q_max as f64
}
