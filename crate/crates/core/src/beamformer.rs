//! Projected-gradient optimizer for holographic pattern weights and feed
//! powers.
//!
//! Every element sees the same channel coefficient, so the received signal
//! factors as `s_{l,u} = h_{l,u} S_u` with
//! `S_u = Σ_n w_n √β m_{u,n} (A_u P_u)_n` and `w = 1ᵀ Ξ_u`. Objective and
//! gradients are evaluated through this scalar; [`link_rates`] rebuilds the
//! full beam matrices instead and serves as the cross-check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, InterferenceModel, RadioConstants, SubbandPlan};
use crate::error::{Error, Result};
use crate::surface::{
    steering_matrix, BeamMatrix, CouplingModel, HoloWeights, PatternBases, RhsGeometry, SIMPLEX_NEG_TOL,
    SIMPLEX_SUM_TOL,
};

const LN2: f64 = std::f64::consts::LN_2;

/// How ω_l enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Rate of user l divided by ω_l.
    #[default]
    AsPrinted,
    /// Rate of user l multiplied by ω_l.
    Inverted,
}

/// Feed amplitudes P_{u,k} (√W), one sphere of radius √(P^Tx/U) per subband.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc {
    subbands: usize,
    feeds: usize,
    /// Layout `[u·K + k]`.
    p: Vec<f64>,
    p_tx_total: f64,
}

/// Tolerance on ‖P_u‖² − P^Tx/U, relative to the budget.
pub const POWER_NORM_TOL: f64 = 1e-9;

impl PowerAlloc {
    pub fn new(subbands: usize, feeds: usize, p: Vec<f64>, p_tx_total: f64) -> Result<Self> {
        if p.len() != subbands * feeds || subbands * feeds == 0 {
            return Err(Error::Domain(format!(
                "power vector of length {} does not match U={subbands}, K={feeds}",
                p.len()
            )));
        }
        if !(p_tx_total > 0.0 && p_tx_total.is_finite()) {
            return Err(Error::Domain(format!("transmit power {p_tx_total} W must be positive")));
        }
        let out = Self { subbands, feeds, p, p_tx_total };
        out.validate()?;
        Ok(out)
    }

    /// Equal amplitude on every feed.
    pub fn uniform(subbands: usize, feeds: usize, p_tx_total: f64) -> Self {
        let amp = (p_tx_total / subbands as f64 / feeds as f64).sqrt();
        Self { subbands, feeds, p: vec![amp; subbands * feeds], p_tx_total }
    }

    pub fn validate(&self) -> Result<()> {
        let budget = self.budget();
        for u in 0..self.subbands {
            let row = self.subband(u);
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Domain(format!("negative feed amplitude on subband {u}")));
            }
            let n2: f64 = row.iter().map(|x| x * x).sum();
            if (n2 - budget).abs() > POWER_NORM_TOL * budget {
                return Err(Error::Domain(format!("feed power on subband {u} is {n2} W, expected {budget} W")));
            }
        }
        Ok(())
    }

    pub fn subbands(&self) -> usize {
        self.subbands
    }
    pub fn feeds(&self) -> usize {
        self.feeds
    }
    pub fn p_tx_total(&self) -> f64 {
        self.p_tx_total
    }

    /// P_u^Tx = P^Tx / U.
    pub fn budget(&self) -> f64 {
        self.p_tx_total / self.subbands as f64
    }

    pub fn get(&self, u: usize, k: usize) -> f64 {
        self.p[u * self.feeds + k]
    }

    pub fn subband(&self, u: usize) -> &[f64] {
        &self.p[u * self.feeds..(u + 1) * self.feeds]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Weights and powers together.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    pub weights: HoloWeights,
    pub powers: PowerAlloc,
}

/// Everything the link and surface models contribute to one solve.
#[derive(Debug, Clone, Copy)]
pub struct BeamInputs<'a> {
    pub geometry: &'a RhsGeometry,
    pub coupling: &'a CouplingModel,
    pub plan: &'a SubbandPlan,
    pub channel: &'a ChannelState,
    pub interference: &'a InterferenceModel,
    pub radio: &'a RadioConstants,
}

/// Precomputed, state-independent pieces of the objective.
#[derive(Debug, Clone)]
pub struct BeamContext {
    users: usize,
    subbands: usize,
    feeds: usize,
    elements: usize,
    bandwidth: f64,
    sqrt_beta: f64,
    p_tx_total: f64,
    /// w_u = 1ᵀ Ξ_u, `[u][n]`.
    w: Vec<Vec<Complex64>>,
    /// A_u, N×K.
    steer: Vec<DMatrix<Complex64>>,
    bases: Vec<PatternBases>,
    /// |h_{l,u}|², `[l][u]`.
    h2: Vec<Vec<f64>>,
    /// B_{l,u} < 0, `[l][u]`.
    b: Vec<Vec<f64>>,
    /// Per-user multiplier: 1/ω_l or ω_l, 0 for excluded users.
    iota: Vec<f64>,
}

impl BeamContext {
    pub fn new(inputs: &BeamInputs, omega: &[f64], weighting: Weighting, p_tx_total: f64) -> Result<Self> {
        let geom = inputs.geometry;
        let users = inputs.channel.h.len();
        let subbands = inputs.plan.len();
        if omega.len() != users {
            return Err(Error::Domain(format!("{} rate weights for {users} users", omega.len())));
        }
        if inputs.coupling.xi.len() != subbands {
            return Err(Error::Domain(format!(
                "coupling model covers {} subbands, plan has {subbands}",
                inputs.coupling.xi.len()
            )));
        }
        if omega.iter().any(|&o| !(o >= 0.0 && o.is_finite())) {
            return Err(Error::Domain("rate weights must be finite and non-negative".into()));
        }
        if !(p_tx_total > 0.0) {
            return Err(Error::Domain(format!("transmit power {p_tx_total} W must be positive")));
        }
        let bandwidth = inputs.plan.subband_bandwidth_hz;
        let n = geom.num_elements();
        let mut w = Vec::with_capacity(subbands);
        let mut steer = Vec::with_capacity(subbands);
        let mut bases = Vec::with_capacity(subbands);
        for u in 0..subbands {
            let lambda = inputs.plan.wavelength(u);
            let xi = &inputs.coupling.xi[u];
            w.push((0..n).map(|c| xi.column(c).sum()).collect());
            steer.push(steering_matrix(geom, lambda));
            bases.push(PatternBases::compute(geom, &inputs.channel.theta, &inputs.channel.phi, lambda));
        }
        let g = inputs.radio.gain_product();
        let mut b = vec![vec![0.0; subbands]; users];
        let mut h2 = vec![vec![0.0; subbands]; users];
        for l in 0..users {
            for u in 0..subbands {
                let ber = inputs.radio.ber_target[l][u];
                let denom = channel::impairment_power(inputs.interference.ibi_power(u), inputs.radio, bandwidth);
                b[l][u] = 1.5 / (5.0 * ber).ln() * g / denom;
                if !(b[l][u] < 0.0) {
                    return Err(Error::Domain(format!("rate constant for user {l} subband {u} is not negative")));
                }
                h2[l][u] = inputs.channel.h[l][u].norm_sqr();
            }
        }
        let iota = omega
            .iter()
            .map(|&o| match (o > 0.0, weighting) {
                (false, _) => 0.0,
                (true, Weighting::AsPrinted) => 1.0 / o,
                (true, Weighting::Inverted) => o,
            })
            .collect();
        Ok(Self {
            users,
            subbands,
            feeds: geom.num_feeds(),
            elements: n,
            bandwidth,
            sqrt_beta: geom.efficiency.sqrt(),
            p_tx_total,
            w,
            steer,
            bases,
            h2,
            b,
            iota,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }
    pub fn subbands(&self) -> usize {
        self.subbands
    }
    pub fn feeds(&self) -> usize {
        self.feeds
    }
    pub fn p_tx_total(&self) -> f64 {
        self.p_tx_total
    }
    pub fn rate_constant(&self, l: usize, u: usize) -> f64 {
        self.b[l][u]
    }
    pub fn user_multiplier(&self, l: usize) -> f64 {
        self.iota[l]
    }

    /// Uniform weights and powers.
    pub fn equal_state(&self) -> BeamformingState {
        BeamformingState {
            weights: HoloWeights::uniform(self.users, self.subbands, self.feeds),
            powers: PowerAlloc::uniform(self.subbands, self.feeds, self.p_tx_total),
        }
    }

    /// Uniform draws projected onto the simplex and the power sphere.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> BeamformingState {
        let block = self.users * self.feeds;
        let mut a = Vec::with_capacity(block * self.subbands);
        for _ in 0..self.subbands {
            let v: Vec<f64> = (0..block).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = v.iter().sum();
            let v: Vec<f64> = v.iter().map(|x| x / s).collect();
            a.extend(project_simplex(&v));
        }
        let budget = self.p_tx_total / self.subbands as f64;
        let mut p = Vec::with_capacity(self.subbands * self.feeds);
        for _ in 0..self.subbands {
            let v: Vec<f64> = (0..self.feeds).map(|_| rng.gen::<f64>()).collect();
            p.extend(project_power(&v, budget));
        }
        BeamformingState {
            weights: HoloWeights::new(self.users, self.subbands, self.feeds, a)
                .expect("projected weights lie on the simplex"),
            powers: PowerAlloc { subbands: self.subbands, feeds: self.feeds, p, p_tx_total: self.p_tx_total },
        }
    }

    fn check_dims(&self, a: &[f64], p: &[f64]) {
        assert_eq!(a.len(), self.users * self.subbands * self.feeds, "weight length");
        assert_eq!(p.len(), self.subbands * self.feeds, "power length");
    }

    /// S_u, the pattern m_u and v_n = w_n √β (A_u P_u)_n for raw `a`, `p`.
    fn subband_eval(&self, a: &[f64], p: &[f64], u: usize) -> SubbandEval {
        let kk = self.feeds;
        let block = self.users * kk;
        let au = &a[u * block..(u + 1) * block];
        let pu = &p[u * kk..(u + 1) * kk];
        let mut m = vec![0.0; self.elements];
        for l in 0..self.users {
            for k in 0..kk {
                let wt = au[l * kk + k];
                if wt == 0.0 {
                    continue;
                }
                for (mn, &b) in m.iter_mut().zip(&self.bases[u].phi[l][k]) {
                    *mn += wt * b;
                }
            }
        }
        let steer = &self.steer[u];
        let v: Vec<Complex64> = (0..self.elements)
            .map(|n| {
                let ap: Complex64 = (0..kk).map(|k| steer[(n, k)] * pu[k]).sum();
                self.w[u][n] * self.sqrt_beta * ap
            })
            .collect();
        let s = m.iter().zip(&v).map(|(&mn, vn)| vn * mn).sum();
        SubbandEval { s, m, v }
    }

    /// J at arbitrary `a` and `p`, feasible or not.
    pub fn objective_raw(&self, a: &[f64], p: &[f64]) -> f64 {
        self.check_dims(a, p);
        let mut j = 0.0;
        for u in 0..self.subbands {
            let s2 = self.subband_eval(a, p, u).s.norm_sqr();
            for l in 0..self.users {
                if self.iota[l] == 0.0 {
                    continue;
                }
                j += self.iota[l] * log2_term(self.b[l][u], self.h2[l][u] * s2);
            }
        }
        self.bandwidth * j
    }

    /// c_u = B_g Σ_l ι_l (−B_{l,u}/ln 2)|h_{l,u}|² / (1 − B_{l,u}|s_{l,u}|²).
    fn chain_factor(&self, u: usize, s2: f64) -> f64 {
        let mut c = 0.0;
        for l in 0..self.users {
            if self.iota[l] == 0.0 {
                continue;
            }
            let b = self.b[l][u];
            let h2 = self.h2[l][u];
            c += self.iota[l] * (-b / LN2) * h2 / (1.0 - b * h2 * s2);
        }
        self.bandwidth * c
    }

    /// Real gradients (∂J/∂a in weight layout, ∂J/∂P in power layout) at raw
    /// `a`, `p`.
    pub fn gradient_raw(&self, a: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.check_dims(a, p);
        let kk = self.feeds;
        let mut ga = vec![0.0; a.len()];
        let mut gp = vec![0.0; p.len()];
        for u in 0..self.subbands {
            let ev = self.subband_eval(a, p, u);
            let c = self.chain_factor(u, ev.s.norm_sqr());
            let sc = ev.s.conj();
            for l in 0..self.users {
                for k in 0..kk {
                    let e: Complex64 = self.bases[u].phi[l][k].iter().zip(&ev.v).map(|(&f, v)| v * f).sum();
                    ga[(u * self.users + l) * kk + k] = c * 2.0 * (sc * e).re;
                }
            }
            for k in 0..kk {
                let d = self.power_direction(&ev, u, k);
                gp[u * kk + k] = c * 2.0 * (sc * d).re;
            }
        }
        (ga, gp)
    }

    /// d_k = ∂S_u/∂P_{u,k} = Σ_n w_n √β m_n A_{n,k}.
    fn power_direction(&self, ev: &SubbandEval, u: usize, k: usize) -> Complex64 {
        (0..self.elements).map(|n| self.w[u][n] * self.sqrt_beta * ev.m[n] * self.steer[u][(n, k)]).sum()
    }

    pub fn objective(&self, state: &BeamformingState) -> f64 {
        self.objective_raw(state.weights.as_slice(), state.powers.as_slice())
    }

    /// Wirtinger gradient ∇_{P_u*} J; the real ascent direction is twice its
    /// real part.
    pub fn grad_power(&self, state: &BeamformingState, u: usize) -> Vec<Complex64> {
        let (a, p) = (state.weights.as_slice(), state.powers.as_slice());
        self.check_dims(a, p);
        let ev = self.subband_eval(a, p, u);
        let c = self.chain_factor(u, ev.s.norm_sqr());
        (0..self.feeds).map(|k| ev.s * self.power_direction(&ev, u, k).conj() * c).collect()
    }

    /// ∂J/∂a_{l,u,k}.
    pub fn grad_weight(&self, state: &BeamformingState, l: usize, u: usize, k: usize) -> f64 {
        let (a, p) = (state.weights.as_slice(), state.powers.as_slice());
        self.check_dims(a, p);
        let ev = self.subband_eval(a, p, u);
        let c = self.chain_factor(u, ev.s.norm_sqr());
        let e: Complex64 = self.bases[u].phi[l][k].iter().zip(&ev.v).map(|(&f, v)| v * f).sum();
        c * 2.0 * (ev.s.conj() * e).re
    }

    /// s_{l,u} magnitudes squared, `[l][u]`.
    pub fn signal_power(&self, state: &BeamformingState) -> Vec<Vec<f64>> {
        let (a, p) = (state.weights.as_slice(), state.powers.as_slice());
        let s2: Vec<f64> = (0..self.subbands).map(|u| self.subband_eval(a, p, u).s.norm_sqr()).collect();
        (0..self.users).map(|l| (0..self.subbands).map(|u| self.h2[l][u] * s2[u]).collect()).collect()
    }

    /// R_l = B_g Σ_u log2(1 − B_{l,u}|s_{l,u}|²) (bit/s).
    pub fn user_rates(&self, state: &BeamformingState) -> Vec<f64> {
        self.signal_power(state)
            .iter()
            .enumerate()
            .map(|(l, row)| {
                self.bandwidth * row.iter().enumerate().map(|(u, &s2)| log2_term(self.b[l][u], s2)).sum::<f64>()
            })
            .collect()
    }
}

struct SubbandEval {
    s: Complex64,
    m: Vec<f64>,
    v: Vec<Complex64>,
}

fn log2_term(b: f64, s2: f64) -> f64 {
    (-b * s2).ln_1p() / LN2
}

/// Per-user rates through the full beam matrices, SINR and M-QAM mapping.
pub fn link_rates(inputs: &BeamInputs, state: &BeamformingState) -> Result<Vec<f64>> {
    let wavelengths: Vec<f64> = (0..inputs.plan.len()).map(|u| inputs.plan.wavelength(u)).collect();
    let bases: Vec<PatternBases> = wavelengths
        .iter()
        .map(|&lambda| PatternBases::compute(inputs.geometry, &inputs.channel.theta, &inputs.channel.phi, lambda))
        .collect();
    let beams = BeamMatrix::build(inputs.geometry, inputs.coupling, &bases, &state.weights, &wavelengths);
    let bw = inputs.plan.subband_bandwidth_hz;
    inputs
        .channel
        .h
        .iter()
        .enumerate()
        .map(|(l, hl)| {
            let k = (0..inputs.plan.len())
                .map(|u| {
                    let p = nalgebra::DVector::from_iterator(
                        state.powers.feeds(),
                        state.powers.subband(u).iter().map(|&x| Complex64::new(x, 0.0)),
                    );
                    let mp = &beams.m_tilde[u] * p;
                    let s = hl[u] * mp.sum();
                    let gamma = channel::sinr(s, inputs.interference, inputs.radio, bw, u);
                    channel::spectral_efficiency(gamma, inputs.radio.ber_target[l][u])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(channel::user_rate(&k, bw))
        })
        .collect()
}

/// Euclidean projection onto {x ≥ 0, Σx = 1} by sort and threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // large inputs leave cancellation error in the sum
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|xi| *xi /= sum);
    x
}

/// Clamp to the nonnegative orthant, then rescale to ‖x‖² = `budget`.
/// An all-zero clamp falls back to equal amplitudes.
pub fn project_power(v: &[f64], budget: f64) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let c: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![(budget / v.len() as f64).sqrt(); v.len()];
    }
    let scale = budget.sqrt() / norm;
    c.iter().map(|x| x * scale).collect()
}

/// Step sizes and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgParams {
    pub eta_p: f64,
    pub eta_a: f64,
    /// Stop when |J⁽ⁱ⁺¹⁾ − J⁽ⁱ⁾| ≤ eps·|J⁽ⁱ⁾|.
    pub eps: f64,
    pub max_iter: usize,
    /// Divide both gradients by J⁽⁰⁾, making the steps independent of the
    /// units of ω.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for PgParams {
    fn default() -> Self {
        Self { eta_p: 0.05, eta_a: 0.05, eps: 1e-4, max_iter: 200, normalize: false }
    }
}

/// Relative size of a downward step that counts as a dip in the trace.
pub const DIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PgReport {
    pub state: BeamformingState,
    /// J⁽⁰⁾, J⁽¹⁾, ...
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Steps where J fell by more than [`DIP_TOL`]·J⁽⁰⁾.
    pub dips: usize,
}

/// Raised when J stops being finite; carries the last finite iterate.
#[derive(Debug, Clone, thiserror::Error)]
#[error("non-finite objective after {iterations} iterations")]
pub struct PgFailure {
    pub iterations: usize,
    pub last_state: BeamformingState,
    pub trace: Vec<f64>,
}

impl From<PgFailure> for Error {
    fn from(f: PgFailure) -> Self {
        Error::NonFinite { iterations: f.iterations }
    }
}

/// Projected gradient ascent, updating P and a from the same iterate and
/// projecting both.
#[allow(clippy::result_large_err)]
pub fn pg_solve(
    ctx: &BeamContext,
    init: BeamformingState,
    params: PgParams,
) -> std::result::Result<PgReport, PgFailure> {
    let (users, subbands, feeds) = (ctx.users, ctx.subbands, ctx.feeds);
    let budget = ctx.p_tx_total / subbands as f64;
    let block = users * feeds;
    let j0 = ctx.objective(&init);
    let mut trace = vec![j0];
    if !j0.is_finite() {
        return Err(PgFailure { iterations: 0, last_state: init, trace });
    }
    let mut report = PgReport { state: init, trace: Vec::new(), iterations: 0, converged: j0 == 0.0, dips: 0 };
    if report.converged {
        report.trace = trace;
        return Ok(report);
    }
    let scale = if params.normalize { j0 } else { 1.0 };
    let mut a = report.state.weights.as_slice().to_vec();
    let mut p = report.state.powers.as_slice().to_vec();
    let mut j = j0;
    for it in 1..=params.max_iter {
        let (ga, gp) = ctx.gradient_raw(&a, &p);
        let mut a_next = Vec::with_capacity(a.len());
        let mut p_next = Vec::with_capacity(p.len());
        for u in 0..subbands {
            let step: Vec<f64> = (u * block..(u + 1) * block).map(|i| a[i] + params.eta_a * ga[i] / scale).collect();
            a_next.extend(project_simplex(&step));
            let step: Vec<f64> = (u * feeds..(u + 1) * feeds).map(|i| p[i] + params.eta_p * gp[i] / scale).collect();
            p_next.extend(project_power(&step, budget));
        }
        let j_next = ctx.objective_raw(&a_next, &p_next);
        if !j_next.is_finite() {
            report.state = assemble(ctx, a, p);
            return Err(PgFailure { iterations: it - 1, last_state: report.state, trace });
        }
        trace.push(j_next);
        if j_next < j - DIP_TOL * j0 {
            report.dips += 1;
        }
        let done = (j_next - j).abs() <= params.eps * j.abs();
        a = a_next;
        p = p_next;
        j = j_next;
        report.iterations = it;
        if done {
            report.converged = true;
            break;
        }
    }
    report.state = assemble(ctx, a, p);
    report.trace = trace;
    Ok(report)
}

fn assemble(ctx: &BeamContext, a: Vec<f64>, p: Vec<f64>) -> BeamformingState {
    BeamformingState {
        weights: HoloWeights::new(ctx.users, ctx.subbands, ctx.feeds, a).expect("iterate stays on the simplex"),
        powers: PowerAlloc { subbands: ctx.subbands, feeds: ctx.feeds, p, p_tx_total: ctx.p_tx_total },
    }
}

/// Equal and seeded-random reference states.
#[derive(Debug, Clone)]
pub struct Baselines {
    pub equal: BeamformingState,
    pub random: BeamformingState,
}

pub fn baselines<R: Rng + ?Sized>(ctx: &BeamContext, rng: &mut R) -> Baselines {
    Baselines { equal: ctx.equal_state(), random: ctx.random_state(rng) }
}

/// True when every subband's weights sit on the simplex and every power row
/// on its sphere.
pub fn is_feasible(state: &BeamformingState) -> bool {
    let a_ok = (0..state.weights.subbands()).all(|u| {
        let row = state.weights.subband(u);
        row.iter().all(|&x| x >= -SIMPLEX_NEG_TOL) && (row.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_SUM_TOL
    });
    a_ok && state.powers.validate().is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkGeometry;
    use crate::surface::{build_geometry, Quadrature, SurfaceSpec};
    use nalgebra::{DVector, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        geometry: RhsGeometry,
        coupling: CouplingModel,
        plan: SubbandPlan,
        channel: ChannelState,
        interference: InterferenceModel,
        radio: RadioConstants,
    }

    impl Fixture {
        fn inputs(&self) -> BeamInputs<'_> {
            BeamInputs {
                geometry: &self.geometry,
                coupling: &self.coupling,
                plan: &self.plan,
                channel: &self.channel,
                interference: &self.interference,
                radio: &self.radio,
            }
        }
    }

    fn fixture(nx: usize, k: usize, users: usize, subbands: usize, coupled: bool, seed: u64) -> Fixture {
        let plan = SubbandPlan::new(300e9, 40e9 * subbands as f64 / 4.0, subbands).unwrap();
        let spec = SurfaceSpec {
            nx,
            ny: nx,
            spacing: plan.carrier_wavelength() / 2.0,
            feeds: k,
            feed_positions: None,
            attenuation: 0.1,
            efficiency: 0.8,
            substrate_index: 3f64.sqrt(),
            surface_wave_dir: Vector3::x(),
        };
        let geometry = build_geometry(&spec).unwrap();
        let wl: Vec<f64> = (0..subbands).map(|u| plan.wavelength(u)).collect();
        let ld = plan.carrier_wavelength() / 4.0;
        let coupling = if coupled {
            CouplingModel::build(&geometry, &wl, 50.0, ld, Quadrature::default()).unwrap()
        } else {
            CouplingModel::uncoupled(geometry.num_elements(), &wl, 50.0, ld)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users_pos =
            (0..users).map(|_| Vector3::new(rng.gen_range(1.0..5.0), rng.gen_range(1.0..5.0), 1.6)).collect();
        let link = LinkGeometry::new(Vector3::new(0.0, 0.0, 2.0), users_pos).unwrap();
        let channel = ChannelState::compute(&link, &plan, &vec![3e-3; subbands]).unwrap();
        let interference = InterferenceModel::uniform(subbands, &[0.05], 1.0, Some(1));
        let radio = RadioConstants::uniform_ber(1e3, 1e1, 10f64.powf(-20.4), users, subbands, 1e-3).unwrap();
        Fixture { geometry, coupling, plan, channel, interference, radio }
    }

    fn ctx(f: &Fixture, omega: &[f64]) -> BeamContext {
        BeamContext::new(&f.inputs(), omega, Weighting::AsPrinted, 1.0).unwrap()
    }

    /// J through full matrices: H = h·1ᵀ, M̃ = Ξ M, s = H M̃ P.
    fn naive_objective(f: &Fixture, omega: &[f64], state: &BeamformingState) -> f64 {
        let wl: Vec<f64> = (0..f.plan.len()).map(|u| f.plan.wavelength(u)).collect();
        let bases: Vec<PatternBases> =
            wl.iter().map(|&x| PatternBases::compute(&f.geometry, &f.channel.theta, &f.channel.phi, x)).collect();
        let beams = BeamMatrix::build(&f.geometry, &f.coupling, &bases, &state.weights, &wl);
        let g = f.radio.gain_product();
        let bw = f.plan.subband_bandwidth_hz;
        let n = f.geometry.num_elements();
        let mut j = 0.0;
        for (l, om) in omega.iter().enumerate() {
            for u in 0..f.plan.len() {
                let h = DMatrix::from_element(1, n, f.channel.h[l][u]);
                let p = DVector::from_iterator(
                    state.powers.feeds(),
                    state.powers.subband(u).iter().map(|&x| Complex64::new(x, 0.0)),
                );
                let s = (h * &beams.m_tilde[u] * p)[(0, 0)];
                let ibi = f.interference.ibi_power(u);
                let b = 1.5 / (5.0 * f.radio.ber_target[l][u]).ln() * g / (g * ibi + bw * f.radio.n0);
                j += (1.0 - b * s.norm_sqr()).log2() / om;
            }
        }
        bw * j
    }

    #[test]
    fn zero_power_gives_zero_objective_and_gradient() {
        let f = fixture(3, 2, 2, 2, false, 1);
        let c = ctx(&f, &[1e6, 2e6]);
        let a = HoloWeights::uniform(2, 2, 2);
        let p = vec![0.0; 4];
        assert_eq!(c.objective_raw(a.as_slice(), &p), 0.0);
        let (ga, gp) = c.gradient_raw(a.as_slice(), &p);
        assert!(ga.iter().chain(&gp).all(|&x| x == 0.0));
    }

    #[test]
    fn objective_matches_naive_composition() {
        for seed in 0..5 {
            let f = fixture(4, 2, 3, 2, true, seed);
            let omega = [1e6, 3e6, 2.5e6];
            let c = ctx(&f, &omega);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let st = c.random_state(&mut rng);
            let fast = c.objective(&st);
            let slow = naive_objective(&f, &omega, &st);
            assert!(fast > 0.0);
            assert!((fast - slow).abs() <= 1e-9 * slow, "{fast} vs {slow}");
        }
    }

    #[test]
    fn doubling_omega_halves_objective() {
        let f = fixture(3, 1, 1, 2, false, 2);
        let st = ctx(&f, &[1.0]).equal_state();
        let j1 = ctx(&f, &[1.0]).objective(&st);
        let j2 = ctx(&f, &[2.0]).objective(&st);
        assert!((j1 - 2.0 * j2).abs() <= 1e-14 * j1);
        // with ω = 1 the objective is the rate itself
        let r = ctx(&f, &[1.0]).user_rates(&st)[0];
        assert!((r - j1).abs() <= 1e-12 * r);
    }

    #[test]
    fn inverted_weighting_multiplies() {
        let f = fixture(3, 1, 2, 1, false, 3);
        let omega = [2e6, 5e6];
        let inv = BeamContext::new(&f.inputs(), &omega, Weighting::Inverted, 1.0).unwrap();
        let st = inv.equal_state();
        let r = inv.user_rates(&st);
        let j = inv.objective(&st);
        assert!((j - (r[0] * omega[0] + r[1] * omega[1])).abs() <= 1e-12 * j);
    }

    #[test]
    fn rate_constant_is_negative() {
        let f = fixture(2, 1, 2, 4, false, 0);
        let c = ctx(&f, &[1.0, 1.0]);
        for l in 0..2 {
            for u in 0..4 {
                assert!(c.rate_constant(l, u) < 0.0);
            }
        }
    }

    fn fd_check(c: &BeamContext, a: &[f64], p: &[f64]) -> (f64, f64) {
        let (ga, gp) = c.gradient_raw(a, p);
        let h = 1e-6;
        let fd = |x: &[f64], i: usize, is_a: bool| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (jp, jm) = if is_a {
                (c.objective_raw(&xp, p), c.objective_raw(&xm, p))
            } else {
                (c.objective_raw(a, &xp), c.objective_raw(a, &xm))
            };
            (jp - jm) / (2.0 * h)
        };
        let rel = |an: &[f64], num: Vec<f64>| {
            let d: f64 = an.iter().zip(&num).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            d / an.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        let na: Vec<f64> = (0..a.len()).map(|i| fd(a, i, true)).collect();
        let np: Vec<f64> = (0..p.len()).map(|i| fd(p, i, false)).collect();
        (rel(&ga, na), rel(&gp, np))
    }

    #[test]
    fn gradients_match_finite_differences() {
        let f = fixture(4, 2, 2, 2, true, 7);
        let c = ctx(&f, &[1.5e6, 4e6]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let st = c.random_state(&mut rng);
            let (ea, ep) = fd_check(&c, st.weights.as_slice(), st.powers.as_slice());
            assert!(ea < 1e-4 && ep < 1e-4, "{ea} {ep}");
        }
    }

    #[test]
    fn wirtinger_gradient_real_part_matches_real_gradient() {
        let f = fixture(3, 3, 2, 2, false, 4);
        let c = ctx(&f, &[1e6, 1e6]);
        let st = c.random_state(&mut ChaCha8Rng::seed_from_u64(1));
        let (ga, gp) = c.gradient_raw(st.weights.as_slice(), st.powers.as_slice());
        for u in 0..2 {
            for (k, g) in c.grad_power(&st, u).iter().enumerate() {
                assert!((2.0 * g.re - gp[u * 3 + k]).abs() <= 1e-12 * gp[u * 3 + k].abs());
            }
            for l in 0..2 {
                for k in 0..3 {
                    let i = (u * 2 + l) * 3 + k;
                    assert!((c.grad_weight(&st, l, u, k) - ga[i]).abs() <= 1e-12 * ga[i].abs());
                }
            }
        }
    }

    #[test]
    fn scalar_case_matches_hand_derivative() {
        let f = fixture(1, 1, 1, 1, false, 5);
        let omega = 3e6;
        let c = ctx(&f, &[omega]);
        let st = c.equal_state();
        let p = st.powers.get(0, 0);
        // s = h √β φ A P with a = 1 and Ξ = 1
        let phi =
            PatternBases::compute(&f.geometry, &f.channel.theta, &f.channel.phi, f.plan.wavelength(0)).phi[0][0][0];
        let amp = steering_matrix(&f.geometry, f.plan.wavelength(0))[(0, 0)];
        let q = f.channel.h[0][0].norm_sqr() * 0.8 * phi * phi * amp.norm_sqr();
        let b = c.rate_constant(0, 0);
        let bw = f.plan.subband_bandwidth_hz;
        let j = bw / omega * (1.0 - b * q * p * p).log2();
        let dj = bw / omega * (-b * q * 2.0 * p) / ((1.0 - b * q * p * p) * LN2);
        assert!((c.objective(&st) - j).abs() <= 1e-12 * j);
        let g = 2.0 * c.grad_power(&st, 0)[0].re;
        assert!((g - dj).abs() <= 1e-12 * dj, "{g} vs {dj}");
    }

    #[test]
    fn zero_efficiency_zeroes_weight_gradient() {
        let mut f = fixture(3, 2, 2, 1, false, 6);
        f.geometry.efficiency = 0.0;
        let c = ctx(&f, &[1.0, 1.0]);
        let st = c.equal_state();
        assert!((0..2).all(|l| (0..2).all(|k| c.grad_weight(&st, l, 0, k) == 0.0)));
    }

    #[test]
    fn coinciding_bases_share_gradient() {
        let f = fixture(3, 1, 2, 1, false, 8);
        let mut c = ctx(&f, &[1.0, 2.0]);
        c.bases[0].phi[1] = c.bases[0].phi[0].clone();
        let st = c.random_state(&mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(c.grad_weight(&st, 0, 0, 0), c.grad_weight(&st, 1, 0, 0));
    }

    /// Nearest simplex point by enumerating supports and solving the KKT
    /// system on each.
    fn simplex_oracle(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
            let mut x = vec![0.0; n];
            let mut ok = true;
            for &i in &idx {
                x[i] = v[i] - shift;
                ok &= x[i] >= 0.0;
            }
            if !ok {
                continue;
            }
            let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let on = [0.2, 0.3, 0.5];
        let out = project_simplex(&on);
        for (a, b) in on.iter().zip(&out) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = project_simplex(&v);
            let o = simplex_oracle(&v);
            assert!(x.iter().zip(&o).all(|(a, b)| (a - b).abs() <= 1e-9));
        }
    }

    #[test]
    fn power_projection_examples() {
        assert_eq!(project_power(&[-1.0, 3.0], 1.0), vec![0.0, 1.0]);
        let v = [0.6, 0.8];
        assert_eq!(project_power(&v, 1.0), v.to_vec());
        assert_eq!(project_power(&[-1.0, -2.0], 2.0), vec![1.0, 1.0]);
    }

    #[test]
    fn random_and_equal_states_are_feasible() {
        let f = fixture(3, 3, 4, 4, false, 0);
        let c = ctx(&f, &[1.0; 4]);
        let b = baselines(&c, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(is_feasible(&b.equal) && is_feasible(&b.random));
        assert!((b.equal.weights.get(2, 1, 0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn single_beam_keeps_weight_and_power_budget() {
        let f = fixture(3, 1, 1, 2, false, 11);
        let c = ctx(&f, &[2e6]);
        let rep = pg_solve(&c, c.equal_state(), PgParams::default()).unwrap();
        assert!(rep.state.weights.as_slice().iter().all(|&a| a == 1.0));
        let j = c.objective(&rep.state);
        assert_eq!(j, *rep.trace.last().unwrap());
        // one feed: P is pinned at the budget, so nothing moves
        assert!((j - rep.trace[0]).abs() <= 1e-15 * j);
    }

    #[test]
    fn pg_improves_and_stays_feasible() {
        for seed in 0..5 {
            let f = fixture(4, 2, 2, 2, true, seed);
            let c = ctx(&f, &[1e6, 2e6]);
            let rep = pg_solve(&c, c.equal_state(), PgParams::default()).unwrap();
            assert!(is_feasible(&rep.state));
            assert!(rep.trace.last().unwrap() >= &rep.trace[0]);
            assert_eq!(rep.trace.len(), rep.iterations + 1);
        }
    }

    #[test]
    fn non_finite_objective_reports_last_state() {
        let f = fixture(2, 1, 1, 1, false, 0);
        let mut c = ctx(&f, &[1.0]);
        c.b[0][0] = f64::NEG_INFINITY;
        let err = pg_solve(&c, c.equal_state(), PgParams::default()).unwrap_err();
        assert_eq!(err.iterations, 0);
        assert!(matches!(Error::from(err), Error::NonFinite { iterations: 0 }));
    }

    #[test]
    fn link_rates_agree_with_fast_path() {
        let f = fixture(4, 2, 3, 4, true, 12);
        let c = ctx(&f, &[1.0; 3]);
        let st = c.random_state(&mut ChaCha8Rng::seed_from_u64(5));
        let fast = c.user_rates(&st);
        let slow = link_rates(&f.inputs(), &st).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }
}
