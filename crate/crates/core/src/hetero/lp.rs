//! Dense two-phase revised simplex for the small bounded LPs that arise in
//! the heterogeneous solver.
//!
//! Keeps an explicit basis inverse updated by elementary row operations and
//! refactorized periodically. Pricing is Dantzig's rule; after a run of
//! degenerate pivots it switches to Bland's rule until progress resumes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// minimize cᵀx subject to the rows and x ≥ 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self { cost: vec![0.0; num_vars], rows: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) {
        self.rows.push(LpRow { coeffs, kind, rhs });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals y with c − Aᵀy ≥ 0 at optimality.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Largest violation of a row or sign constraint (row-scaled).
    pub primal_residual: f64,
    /// Most negative reduced cost or wrong-signed dual (cost-scaled).
    pub dual_residual: f64,
    /// Largest |x_j d_j| or |y_r s_r| (scaled).
    pub complementarity: f64,
}

pub const CERT_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const REINVERT_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 40;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColKind>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn binv_row(&self, r: usize) -> &[f64] {
        &self.binv[r * self.m..(r + 1) * self.m]
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        for &(i, a) in &self.cols[col] {
            for (r, wr) in w.iter_mut().enumerate() {
                *wr += self.binv[r * self.m + i] * a;
            }
        }
        w
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (yi, &v) in y.iter_mut().zip(self.binv_row(r)) {
                    *yi += cb * v;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn reinvert(&mut self) -> Result<()> {
        let m = self.m;
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (r, &bv) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[bv] {
                bm[(i, r)] = a;
            }
        }
        let inv = bm.try_inverse().ok_or_else(|| Error::Lp("basis became singular".into()))?;
        for r in 0..m {
            for c in 0..m {
                self.binv[r * m + c] = inv[(r, c)];
            }
        }
        for r in 0..m {
            let v: f64 = self.binv_row(r).iter().zip(&self.b).map(|(a, b)| a * b).sum();
            self.xb[r] = if v.abs() < 1e-13 { 0.0 } else { v };
        }
        Ok(())
    }

    fn pivot(&mut self, p: usize, q: usize, w: &[f64], theta: f64) {
        let m = self.m;
        for r in 0..m {
            if r != p {
                self.xb[r] -= theta * w[r];
                if self.xb[r] < 0.0 && self.xb[r] > -1e-12 {
                    self.xb[r] = 0.0;
                }
            }
        }
        self.xb[p] = theta;
        let wp = w[p];
        for c in 0..m {
            self.binv[p * m + c] /= wp;
        }
        let prow: Vec<f64> = self.binv_row(p).to_vec();
        for (r, &wr) in w.iter().enumerate() {
            if r != p && wr != 0.0 {
                for c in 0..m {
                    self.binv[r * m + c] -= wr * prow[c];
                }
            }
        }
        self.in_basis[self.basis[p]] = false;
        self.basis[p] = q;
        self.in_basis[q] = true;
        self.iterations += 1;
    }

    /// Runs simplex iterations for `cost` until optimal.
    fn optimize(&mut self, cost: &[f64], allow_artificial: bool) -> Result<()> {
        let mut degenerate = 0usize;
        let mut since_reinvert = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Lp(format!("iteration limit {} reached", self.max_iterations)));
            }
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
                since_reinvert = 0;
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let y = self.duals(cost);
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..self.cols.len() {
                if self.in_basis[j] || (!allow_artificial && self.kinds[j] == ColKind::Artificial) {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                if bland {
                    if d < -OPT_TOL {
                        entering = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(());
            };
            let w = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let blocked_art = !allow_artificial && self.kinds[self.basis[r]] == ColKind::Artificial;
                let ratio = if blocked_art && w[r].abs() > PIVOT_TOL {
                    0.0
                } else if w[r] > PIVOT_TOL {
                    self.xb[r].max(0.0) / w[r]
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lr, lt)) => {
                        if ratio < lt - 1e-12 {
                            true
                        } else if ratio <= lt + 1e-12 {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                w[r].abs() > w[lr].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((p, theta)) = leave else {
                return Err(Error::Lp("problem is unbounded".into()));
            };
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(p, q, &w, theta);
            since_reinvert += 1;
        }
    }
}

/// Solves `problem` to optimality and certifies the result.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    let n = problem.num_vars();
    let m = problem.rows.len();

    // normalize rows: b ≥ 0, unit max coefficient
    let mut scale = vec![1.0; m];
    let mut sign = vec![1.0; m];
    let mut kinds = Vec::with_capacity(m);
    let mut b = vec![0.0; m];
    for (r, row) in problem.rows.iter().enumerate() {
        if row.coeffs.iter().any(|&(j, _)| j >= n) {
            return Err(Error::Lp(format!("row {r} references a missing variable")));
        }
        let amax = row.coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
        scale[r] = if amax > 0.0 { amax } else { 1.0 };
        let mut kind = row.kind;
        if row.rhs < 0.0 {
            sign[r] = -1.0;
            kind = match kind {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
        kinds.push(kind);
        b[r] = sign[r] * row.rhs / scale[r];
    }

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in problem.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                cols[j].push((r, sign[r] * a / scale[r]));
            }
        }
    }
    let mut col_kind = vec![ColKind::Structural; n];
    let mut basis = vec![usize::MAX; m];
    let mut slack_of = vec![None; m];
    for r in 0..m {
        match kinds[r] {
            RowKind::Le => {
                cols.push(vec![(r, 1.0)]);
                col_kind.push(ColKind::Slack);
                basis[r] = cols.len() - 1;
                slack_of[r] = Some((cols.len() - 1, 1.0));
            }
            RowKind::Ge => {
                cols.push(vec![(r, -1.0)]);
                col_kind.push(ColKind::Slack);
                slack_of[r] = Some((cols.len() - 1, -1.0));
                cols.push(vec![(r, 1.0)]);
                col_kind.push(ColKind::Artificial);
                basis[r] = cols.len() - 1;
            }
            RowKind::Eq => {
                cols.push(vec![(r, 1.0)]);
                col_kind.push(ColKind::Artificial);
                basis[r] = cols.len() - 1;
            }
        }
    }
    let total = cols.len();
    let mut in_basis = vec![false; total];
    for &bv in &basis {
        in_basis[bv] = true;
    }
    let mut binv = vec![0.0; m * m];
    for r in 0..m {
        binv[r * m + r] = 1.0;
    }
    let mut t = Tableau {
        m,
        cols,
        kinds: col_kind,
        xb: b.clone(),
        b,
        basis,
        in_basis,
        binv,
        iterations: 0,
        max_iterations: 50 * (m + total).max(10),
    };

    // phase 1
    let phase1: Vec<f64> = t.kinds.iter().map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 }).collect();
    if t.kinds.contains(&ColKind::Artificial) {
        t.optimize(&phase1, true)?;
        t.reinvert()?;
        let infeas: f64 =
            t.basis.iter().zip(&t.xb).filter(|(bv, _)| t.kinds[**bv] == ColKind::Artificial).map(|(_, x)| *x).sum();
        let bmax = t.b.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        if infeas > 1e-9 * bmax {
            return Err(Error::Infeasible(format!(
                "linear program has no feasible point (phase-1 residual {infeas:.3e})"
            )));
        }
        // drive zero-level artificials out where a structural or slack column can replace them
        for p in 0..m {
            if t.kinds[t.basis[p]] != ColKind::Artificial {
                continue;
            }
            let row = t.binv_row(p).to_vec();
            let cand = (0..t.cols.len()).find(|&j| {
                !t.in_basis[j]
                    && t.kinds[j] != ColKind::Artificial
                    && t.cols[j].iter().map(|&(i, a)| row[i] * a).sum::<f64>().abs() > 1e-7
            });
            if let Some(q) = cand {
                let w = t.ftran(q);
                t.pivot(p, q, &w, 0.0);
            }
        }
        t.reinvert()?;
    }

    // phase 2 on a cost vector scaled to unit max
    let cmax = problem.cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let cscale = if cmax > 0.0 { cmax } else { 1.0 };
    let mut cost = vec![0.0; t.cols.len()];
    for (j, &c) in problem.cost.iter().enumerate() {
        cost[j] = c / cscale;
    }
    t.optimize(&cost, false)?;
    t.reinvert()?;

    let mut xfull = vec![0.0; t.cols.len()];
    for (r, &bv) in t.basis.iter().enumerate() {
        xfull[bv] = t.xb[r];
    }
    let x: Vec<f64> = xfull[..n].iter().map(|&v| if v.abs() < 1e-13 { 0.0 } else { v }).collect();
    let y_scaled = t.duals(&cost);

    // certification on the scaled problem
    let mut primal: f64 = x.iter().fold(0.0, |a, &v| a.max(-v));
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for r in 0..m {
        let ax: f64 = problem.rows[r].coeffs.iter().map(|&(j, a)| sign[r] * a / scale[r] * x[j]).sum();
        let resid = ax - t.b[r];
        let viol = match kinds[r] {
            RowKind::Le => resid.max(0.0),
            RowKind::Ge => (-resid).max(0.0),
            RowKind::Eq => resid.abs(),
        };
        primal = primal.max(viol);
        // minimization: y ≤ 0 on ≤ rows, y ≥ 0 on ≥ rows
        let wrong_sign = match kinds[r] {
            RowKind::Le => y_scaled[r].max(0.0),
            RowKind::Ge => (-y_scaled[r]).max(0.0),
            RowKind::Eq => 0.0,
        };
        dual = dual.max(wrong_sign);
        if slack_of[r].is_some() {
            comp = comp.max((y_scaled[r] * resid).abs());
        }
    }
    for j in 0..n {
        let d = t.reduced_cost(&cost, &y_scaled, j);
        dual = dual.max(-d);
        comp = comp.max((x[j] * d).abs());
    }
    if primal > CERT_TOL || dual > CERT_TOL || comp > CERT_TOL {
        return Err(Error::Lp(format!(
            "certification failed: primal {primal:.2e}, dual {dual:.2e}, complementarity {comp:.2e}"
        )));
    }

    let objective = problem.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m).map(|r| y_scaled[r] * cscale * sign[r] / scale[r]).collect();
    Ok(LpSolution {
        x,
        objective,
        duals,
        iterations: t.iterations,
        primal_residual: primal,
        dual_residual: dual,
        complementarity: comp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_choice_takes_max_gain() {
        // maximize 1x0 + 3x1 + 2x2 over the simplex
        let mut p = LpProblem::new(3);
        p.cost = vec![-1.0, -3.0, -2.0];
        p.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], RowKind::Eq, 1.0);
        let s = solve(&p).unwrap();
        assert_eq!(s.x, vec![0.0, 1.0, 0.0]);
        assert!((s.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_budget_gives_fractional_split() {
        // paths {1, 4}: path 1 gains 1 and needs 2 units of memory, budget 1
        let mut p = LpProblem::new(2);
        p.cost = vec![-1.0, 0.0];
        p.add_row(vec![(0, 1.0), (1, 1.0)], RowKind::Eq, 1.0);
        p.add_row(vec![(0, 2.0)], RowKind::Le, 1.0);
        let s = solve(&p).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        // budget row tight, its dual carries the marginal gain per unit memory
        assert!((s.duals[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = LpProblem::new(1);
        p.add_row(vec![(0, 1.0)], RowKind::Ge, 2.0);
        p.add_row(vec![(0, 1.0)], RowKind::Le, 1.0);
        assert!(matches!(solve(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = LpProblem::new(2);
        p.cost = vec![-1.0, 0.0];
        p.add_row(vec![(0, 1.0), (1, -1.0)], RowKind::Le, 1.0);
        assert!(matches!(solve(&p), Err(Error::Lp(_))));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = LpProblem::new(2);
        p.cost = vec![1.0, 2.0];
        p.add_row(vec![(0, 1.0), (1, 1.0)], RowKind::Eq, 1.0);
        p.add_row(vec![(0, 2.0), (1, 2.0)], RowKind::Eq, 2.0);
        let s = solve(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_solver_on_random_lps() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let n = rng.gen_range(2..9);
            let m = rng.gen_range(1..7);
            let mut p = LpProblem::new(n);
            let mut oracle = Problem::new(OptimizationDirection::Minimize);
            p.cost = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let vars: Vec<_> = p.cost.iter().map(|&c| oracle.add_var(c, (0.0, f64::INFINITY))).collect();
            // a box keeps everything bounded
            let all: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0)).collect();
            p.add_row(all.clone(), RowKind::Le, 10.0);
            oracle.add_constraint(
                &all.iter().map(|&(j, a)| (vars[j], a)).collect::<Vec<_>>()[..],
                ComparisonOp::Le,
                10.0,
            );
            for _ in 0..m {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.7) {
                        coeffs.push((j, rng.gen_range(-3.0..3.0)));
                    }
                }
                let kind = match rng.gen_range(0..3) {
                    0 => RowKind::Le,
                    1 => RowKind::Ge,
                    _ => RowKind::Eq,
                };
                let rhs = rng.gen_range(-4.0..4.0);
                let op = match kind {
                    RowKind::Le => ComparisonOp::Le,
                    RowKind::Ge => ComparisonOp::Ge,
                    RowKind::Eq => ComparisonOp::Eq,
                };
                oracle.add_constraint(&coeffs.iter().map(|&(j, a)| (vars[j], a)).collect::<Vec<_>>()[..], op, rhs);
                p.add_row(coeffs, kind, rhs);
            }
            match (solve(&p), oracle.solve()) {
                (Ok(ours), Ok(theirs)) => {
                    assert!(
                        (ours.objective - theirs.objective()).abs() <= 1e-7 * (1.0 + theirs.objective().abs()),
                        "case {case}: {} vs {}",
                        ours.objective,
                        theirs.objective()
                    );
                }
                (Err(Error::Infeasible(_)), Err(minilp::Error::Infeasible)) => {}
                (a, b) => panic!("case {case}: disagreement {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn degenerate_assignment_lp() {
        // many identical columns: heavy degeneracy, must still terminate
        let k = 12;
        let mut p = LpProblem::new(4 * k);
        for i in 0..k {
            p.add_row((0..4).map(|j| (4 * i + j, 1.0)).collect(), RowKind::Eq, 1.0);
            for j in 0..3 {
                p.cost[4 * i + j] = -1.0;
            }
        }
        p.add_row((0..k).map(|i| (4 * i, 1.0)).collect(), RowKind::Le, 0.0);
        p.add_row((0..k).map(|i| (4 * i + 1, 1.0)).collect(), RowKind::Le, 0.0);
        let s = solve(&p).unwrap();
        assert!((s.objective + k as f64).abs() < 1e-9);
    }
}
