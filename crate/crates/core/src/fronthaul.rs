//! Max-min fronthaul power and subcarrier allocation: bisection on the
//! target rate, a quadratic-transform inner approximation of every rate row,
//! an exp-based smooth L0 surrogate for per-receiver exclusivity, and binary
//! recovery by thresholding.
//!
//! The same machinery serves the CPU→CAP tier (one shared budget) and the
//! CAP→AP tier (one budget per cluster).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::association::ClusterAssignment;
use crate::channel::{ChannelSet, NodeKey};
use crate::conic::{Affine, ConeKind, ConicEngine, ConicOutcome, ConicProblem};
use crate::error::{Error, Result};
use crate::precoding::PrecoderSet;

/// One power variable p_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhVar {
    /// Rate row the variable contributes to.
    pub row: usize,
    /// Exclusivity group: at most one active variable per group.
    pub group: usize,
    /// Index into `budgets`.
    pub budget: usize,
    pub subcarrier: usize,
    /// Transmitter whose beams carry the variable; variables of different
    /// sources on one subcarrier interfere.
    pub source: usize,
    /// Signal gain: A_i = gain·p_i.
    pub gain: f64,
}

/// Interference-coupled rate rows on a set of subcarriers:
/// rate(row) = b·Σ_{i∈row} log₂(1 + A_i / B_i), B_i = floor_i + Σ_j c_ij p_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FronthaulProblem {
    pub vars: Vec<FhVar>,
    /// (j, c_ij) for every variable i.
    pub cross: Vec<Vec<(usize, f64)>>,
    pub floor: Vec<f64>,
    pub budgets: Vec<f64>,
    pub n_rows: usize,
    pub bandwidth: f64,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

impl FronthaulProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        if self.cross.len() != n || self.floor.len() != n {
            return Err(Error::InvalidArgument("cross and floor must have one entry per variable".into()));
        }
        for (i, v) in self.vars.iter().enumerate() {
            if !(v.gain >= 0.0) || !v.gain.is_finite() || v.row >= self.n_rows || v.budget >= self.budgets.len() {
                return Err(Error::InvalidArgument(format!("bad variable {i}: {v:?}")));
            }
            if !(self.floor[i] > 0.0) || !self.floor[i].is_finite() {
                return Err(Error::InvalidArgument(format!("floor of variable {i} must be positive")));
            }
            if self.cross[i].iter().any(|&(j, c)| j >= n || j == i || !(c >= 0.0) || !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad cross term on variable {i}")));
            }
        }
        if self.budgets.iter().any(|b| !(*b > 0.0) || !b.is_finite()) || !(self.bandwidth > 0.0) {
            return Err(Error::InvalidArgument("budgets and bandwidth must be positive".into()));
        }
        Ok(())
    }

    /// (A_i, B_i) at `p`.
    pub fn signal_and_interference(&self, p: &[f64]) -> Vec<(f64, f64)> {
        (0..self.vars.len())
            .map(|i| {
                let b = self.floor[i] + self.cross[i].iter().map(|&(j, c)| c * p[j]).sum::<f64>();
                (self.vars[i].gain * p[i], b)
            })
            .collect()
    }

    pub fn row_rates(&self, p: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_rows];
        for (i, (a, b)) in self.signal_and_interference(p).into_iter().enumerate() {
            r[self.vars[i].row] += self.bandwidth * log2_1p(a / b);
        }
        r
    }

    /// Minimum row rate, `None` when there are no rows.
    pub fn min_rate(&self, p: &[f64]) -> Option<f64> {
        self.row_rates(p).into_iter().reduce(f64::min)
    }

    /// Every violated budget or exclusivity constraint, with relative slack.
    pub fn violations(&self, p: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut used = vec![0.0; self.budgets.len()];
        let mut active: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            if p[i] < -tol * self.budgets[v.budget] {
                out.push(format!("variable {i} negative"));
            }
            used[v.budget] += p[i];
            if p[i] > 0.0 {
                *active.entry(v.group).or_default() += 1;
            }
        }
        for (k, (&u, &b)) in used.iter().zip(&self.budgets).enumerate() {
            if u > b * (1.0 + tol) {
                out.push(format!("budget {k}: {u} > {b}"));
            }
        }
        for (g, n) in active {
            if n > 1 {
                out.push(format!("group {g} has {n} active variables"));
            }
        }
        out
    }

    fn budget_of(&self, i: usize) -> f64 {
        self.budgets[self.vars[i].budget]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// ψ·P; the surrogate sharpness in budget-normalized units.
    pub psi_scaled: f64,
    /// γ = 1 iff p/P ≥ ζ.
    pub zeta: f64,
    /// Bisection gap κ relative to the initial upper bound.
    pub kappa_rel: f64,
    /// χ_com / κ.
    pub chi_com_factor: f64,
    pub max_outer: usize,
    pub max_bisection: usize,
    /// Cap on total compensation relative to the initial upper bound.
    pub compensation_cap: f64,
    /// z²B given to zero-power variables in the loop; 0 keeps z = √A/B,
    /// which holds such variables at zero.
    pub probe: f64,
    /// Also climb from the source-orthogonal start and keep the better end.
    pub two_starts: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            psi_scaled: 200.0,
            zeta: 1e-3,
            kappa_rel: 1e-2,
            chi_com_factor: 2.0,
            max_outer: 50,
            max_bisection: 100,
            compensation_cap: 2.0,
            probe: 0.0,
            two_starts: true,
        }
    }
}

impl SurrogateConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.psi_scaled > 0.0) || !(self.zeta > 0.0 && self.zeta < 1.0) || !(self.kappa_rel > 0.0) {
            return Err(Error::Config("need psi > 0, 0 < zeta < 1, kappa > 0".into()));
        }
        if !(0.0..1.0).contains(&self.probe) {
            return Err(Error::Config("probe must lie in [0, 1)".into()));
        }
        if self.max_outer == 0 || self.max_bisection == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// z_i = √A_i / B_i.
pub fn qt_update(problem: &FronthaulProblem, p: &[f64]) -> Vec<f64> {
    problem.signal_and_interference(p).into_iter().map(|(a, b)| a.sqrt() / b).collect()
}

/// z for the solver loop: as [`qt_update`], except that a variable at zero
/// gets z²B = `probe` instead of z = 0. The QT bound holds for every z ≥ 0;
/// z = 0 pins the variable at zero for good, while a small probe costs an
/// idle variable only log(1 − probe) and lets a step switch it on.
fn qt_probe(problem: &FronthaulProblem, p: &[f64], probe: f64) -> Vec<f64> {
    problem
        .signal_and_interference(p)
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| if p[i] > 0.0 { a.sqrt() / b } else { (probe / b).sqrt() })
        .collect()
}

/// 2z√A − z²B, the quadratic-transform lower bound on A/B.
pub fn qt_inner(z: f64, a: f64, b: f64) -> f64 {
    2.0 * z * a.sqrt() - z * z * b
}

/// Ξ(p) = Σ_i (1 − e^{−ψ p_i}), a smooth count of the nonzero entries.
pub fn smooth_l0(p: &[f64], psi: f64) -> f64 {
    p.iter().map(|&x| 1.0 - (-psi * x).exp()).sum()
}

/// First-order majorizer of Ξ at `anchor`:
/// Ξ(anchor) + Σ ψ e^{−ψ anchor_i}(p_i − anchor_i).
pub fn surrogate(p: &[f64], anchor: &[f64], psi: f64) -> f64 {
    smooth_l0(anchor, psi) + p.iter().zip(anchor).map(|(&x, &a)| psi * (-psi * a).exp() * (x - a)).sum::<f64>()
}

/// γ_i = 1 iff p_i / budget ≥ ζ, boundary inclusive.
pub fn recover_gamma(p: &[f64], budget: &[f64], zeta: f64) -> Vec<bool> {
    p.iter().zip(budget).map(|(&x, &b)| x / b >= zeta).collect()
}

/// One convex feasibility step at fixed z and target `chi` (bit/s): find the
/// least total (budget-normalized) power meeting every row through the QT
/// inner bound, the budgets and the linearized exclusivity surrogate.
/// Variables with z_i = 0 cannot raise any rate and are held at zero.
/// Returns `Ok(None)` when the step is infeasible.
pub fn qt_feasibility_step(
    problem: &FronthaulProblem,
    z: &[f64],
    chi: f64,
    anchors: &[f64],
    cfg: &SurrogateConfig,
    engine: &dyn ConicEngine,
) -> Result<Option<Vec<f64>>> {
    let n = problem.vars.len();
    if chi <= 0.0 {
        return Ok(Some(vec![0.0; n]));
    }
    let live: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0 && problem.vars[i].gain > 0.0).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in live.iter().enumerate() {
        slot[i] = k;
    }
    // Every row must own a live variable, else it cannot reach chi > 0.
    let mut has_live = vec![false; problem.n_rows];
    for &i in &live {
        has_live[problem.vars[i].row] = true;
    }
    if has_live.iter().any(|&h| !h) {
        return Ok(None);
    }
    let k = live.len();
    // Each power is measured relative to a reference r (the anchor, or an
    // even split where the anchor is zero): p̂ = r·x. Every log argument is
    // divided by its value at x = 1, so all coefficients stay O(1) even at
    // SNRs of 80 dB and more.
    let mut live_per_budget = vec![0usize; problem.budgets.len()];
    for &i in &live {
        live_per_budget[problem.vars[i].budget] += 1;
    }
    let r: Vec<f64> = live
        .iter()
        .map(|&i| {
            let a = anchors[i] / problem.budget_of(i);
            if a > 0.0 {
                a
            } else {
                1.0 / live_per_budget[problem.vars[i].budget] as f64
            }
        })
        .collect();
    // Layout: x (0..k), y = √x (k..2k), t (2k..3k).
    let (ix, iy, it) = (0, k, 2 * k);
    let mut pr = ConicProblem::new(3 * k);
    for j in 0..k {
        pr.objective[ix + j] = r[j];
        pr.nonneg(Affine::var(ix + j, 1.0));
    }
    for (bi, _) in problem.budgets.iter().enumerate() {
        let mut e = Affine::constant(1.0);
        for (j, &i) in live.iter().enumerate() {
            if problem.vars[i].budget == bi {
                e = e.plus(ix + j, -r[j]);
            }
        }
        if !e.terms.is_empty() {
            pr.nonneg(e);
        }
    }
    let mut log_ref = vec![0.0; k];
    for (j, &i) in live.iter().enumerate() {
        let fl = problem.floor[i];
        // z in floor-normalized units; 2z√A − z²B is unchanged.
        let zi = z[i] * fl.sqrt();
        // 1 + 2z√(ĝ r) y − z²(1 + Σ ĉ r x)
        let lin = 2.0 * zi * (problem.vars[i].gain * problem.budget_of(i) / fl * r[j]).sqrt();
        let mut w = Affine::constant(1.0 - zi * zi).plus(iy + j, lin);
        for &(jj, c) in &problem.cross[i] {
            if slot[jj] != usize::MAX {
                let l = slot[jj];
                w = w.plus(ix + l, -zi * zi * c * problem.budget_of(jj) / fl * r[l]);
            }
        }
        let at_ref = w.constant + w.terms.iter().map(|&(_, c)| c).sum::<f64>();
        let scale = at_ref.max(1.0);
        log_ref[j] = scale.ln();
        w.constant /= scale;
        for t in w.terms.iter_mut() {
            t.1 /= scale;
        }
        // y² ≤ x as ‖(2y, x − 1)‖ ≤ x + 1
        pr.push(
            ConeKind::Soc,
            vec![Affine::constant(1.0).plus(ix + j, 1.0), Affine::var(iy + j, 2.0), Affine::constant(-1.0).plus(ix + j, 1.0)],
        );
        pr.push(ConeKind::Exp, vec![Affine::var(it + j, 1.0), Affine::constant(1.0), w]);
    }
    let target = chi * std::f64::consts::LN_2 / problem.bandwidth;
    for row in 0..problem.n_rows {
        let mut e = Affine::constant(-target);
        for (j, &i) in live.iter().enumerate() {
            if problem.vars[i].row == row {
                e = e.plus(it + j, 1.0);
                e.constant += log_ref[j];
            }
        }
        pr.nonneg(e);
    }
    // Exclusivity surrogate on groups with more than one live variable.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, &i) in live.iter().enumerate() {
        groups.entry(problem.vars[i].group).or_default().push(j);
    }
    let psi = cfg.psi_scaled;
    for members in groups.values().filter(|m| m.len() > 1) {
        let a: Vec<f64> = members.iter().map(|&j| anchors[live[j]] / problem.budget_of(live[j])).collect();
        let mut e = Affine::constant(1.0 - smooth_l0(&a, psi));
        for (&j, &aj) in members.iter().zip(&a) {
            let slope = psi * (-psi * aj).exp();
            e.constant += slope * aj;
            e = e.plus(ix + j, -slope * r[j]);
        }
        pr.nonneg(e);
    }
    match engine.solve(&pr) {
        ConicOutcome::Solved { x, .. } => {
            let mut p = vec![0.0; n];
            for (j, &i) in live.iter().enumerate() {
                p[i] = (x[ix + j] * r[j]).max(0.0) * problem.budget_of(i);
            }
            // Interior-point slack can overshoot a budget by ~tol; pull back.
            for (bi, &b) in problem.budgets.iter().enumerate() {
                let used: f64 = (0..n).filter(|&i| problem.vars[i].budget == bi).map(|i| p[i]).sum();
                if used > b {
                    for i in (0..n).filter(|&i| problem.vars[i].budget == bi) {
                        p[i] *= b / used;
                    }
                }
            }
            Ok(Some(p))
        }
        ConicOutcome::Infeasible => Ok(None),
        // Numerical trouble near the feasibility boundary counts as a
        // failed probe.
        ConicOutcome::Failed(_) => Ok(None),
    }
}

/// Feasible start: in each exclusivity group one variable is active, taking
/// turns over the groups in subcarrier order so every row gets an equal
/// share; power is spread evenly within each budget.
pub fn initial_allocation(problem: &FronthaulProblem) -> Vec<f64> {
    let subs = subcarrier_ranks(problem);
    round_robin_with(problem, |_| true, |m| subs.binary_search(&m).unwrap_or(0))
}

/// Feasible start without cross-source interference: subcarriers are dealt
/// to the sources in turn, and within a source's subcarriers the groups take
/// turns over their rows as in [`initial_allocation`].
pub fn orthogonal_allocation(problem: &FronthaulProblem) -> Vec<f64> {
    let mut sources: Vec<usize> = problem.vars.iter().map(|v| v.source).collect();
    sources.sort_unstable();
    sources.dedup();
    let subs = subcarrier_ranks(problem);
    if sources.is_empty() {
        return vec![0.0; problem.vars.len()];
    }
    let owner = |m: usize| {
        let rank = subs.binary_search(&m).unwrap_or(0);
        (sources[rank % sources.len()], rank / sources.len())
    };
    round_robin_with(problem, |v| owner(v.subcarrier).0 == v.source, |m| owner(m).1)
}

fn subcarrier_ranks(problem: &FronthaulProblem) -> Vec<usize> {
    let mut subs: Vec<usize> = problem.vars.iter().map(|v| v.subcarrier).collect();
    subs.sort_unstable();
    subs.dedup();
    subs
}

/// One variable per group among those `eligible`, choosing row
/// `rows[turn(m) % rows]`, with every budget split evenly over its picks.
fn round_robin_with(
    problem: &FronthaulProblem,
    eligible: impl Fn(&FhVar) -> bool,
    turn: impl Fn(usize) -> usize,
) -> Vec<f64> {
    let n = problem.vars.len();
    let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, v) in problem.vars.iter().enumerate() {
        if eligible(v) {
            by_group.entry(v.group).or_default().push(i);
        }
    }
    let mut chosen = vec![false; n];
    for members in by_group.values() {
        let mut rows: Vec<usize> = members.iter().map(|&i| problem.vars[i].row).collect();
        rows.sort_unstable();
        rows.dedup();
        let want = rows[turn(problem.vars[members[0]].subcarrier) % rows.len()];
        if let Some(&i) = members.iter().find(|&&i| problem.vars[i].row == want) {
            chosen[i] = true;
        }
    }
    let mut count = vec![0usize; problem.budgets.len()];
    for i in (0..n).filter(|&i| chosen[i]) {
        count[problem.vars[i].budget] += 1;
    }
    (0..n)
        .map(|i| if chosen[i] { problem.budget_of(i) / count[problem.vars[i].budget] as f64 } else { 0.0 })
        .collect()
}

/// Interference-free water-filling bound: each row alone, full budget.
pub fn rate_upper_bound(problem: &FronthaulProblem) -> f64 {
    let mut best = f64::INFINITY;
    for r in 0..problem.n_rows {
        let idx: Vec<usize> = (0..problem.vars.len()).filter(|&i| problem.vars[i].row == r).collect();
        // Rows draw from one budget by construction; take the largest if not.
        let budget = idx.iter().map(|&i| problem.budget_of(i)).fold(0.0, f64::max);
        let mut inv: Vec<f64> = idx
            .iter()
            .map(|&i| problem.vars[i].gain * budget / problem.floor[i])
            .filter(|&g| g > 0.0)
            .map(|g| 1.0 / g)
            .collect();
        inv.sort_by(f64::total_cmp);
        let mut level = 0.0;
        for k in (1..=inv.len()).rev() {
            let mu = (1.0 + inv[..k].iter().sum::<f64>()) / k as f64;
            if mu > inv[k - 1] {
                level = mu;
                break;
            }
        }
        let bits: f64 = inv.iter().map(|&x| if level > x { (level / x).log2() } else { 0.0 }).sum();
        best = best.min(problem.bandwidth * bits);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub iteration: usize,
    pub chi: f64,
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FronthaulSolution {
    pub p: Vec<f64>,
    pub gamma: Vec<bool>,
    /// True min row rate of `p` after recovery.
    pub min_rate: f64,
    pub upper0: f64,
    pub lower: f64,
    pub trace: Vec<TraceRow>,
    pub warning: Option<String>,
}

/// Screen contested groups: where a group holds more than one positive
/// power, zero those with γ = 0 and then keep only the strongest. A group's
/// sole positive variable is kept whatever its size.
fn apply_recovery(problem: &FronthaulProblem, p: &mut [f64], zeta: f64) -> Vec<bool> {
    let budgets: Vec<f64> = (0..p.len()).map(|i| problem.budget_of(i)).collect();
    let screened = recover_gamma(p, &budgets, zeta);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in (0..p.len()).filter(|&i| p[i] > 0.0) {
        groups.entry(problem.vars[i].group).or_default().push(i);
    }
    let mut gamma = vec![false; p.len()];
    for members in groups.values() {
        let mut keep: Vec<usize> = if members.len() > 1 {
            members.iter().copied().filter(|&i| screened[i]).collect()
        } else {
            members.clone()
        };
        if keep.len() > 1 {
            let best = keep.iter().copied().fold(keep[0], |b, i| if p[i] > p[b] { i } else { b });
            keep = vec![best];
        }
        for &i in &keep {
            gamma[i] = true;
        }
    }
    for i in 0..p.len() {
        if !gamma[i] {
            p[i] = 0.0;
        }
    }
    gamma
}

/// Scales every power by the largest common factor the budgets allow. A
/// common scale k ≥ 1 never lowers any SINR, and it lifts powers that the
/// least-power steps leave just above zero.
pub fn fill_budgets(problem: &FronthaulProblem, p: &[f64]) -> Vec<f64> {
    let mut used = vec![0.0; problem.budgets.len()];
    for (i, v) in problem.vars.iter().enumerate() {
        used[v.budget] += p[i];
    }
    let k = used
        .iter()
        .zip(&problem.budgets)
        .filter(|(&u, _)| u > 0.0)
        .map(|(&u, &b)| b / u)
        .fold(f64::INFINITY, f64::min);
    if k.is_finite() && k > 1.0 {
        p.iter().map(|&x| x * k).collect()
    } else {
        p.to_vec()
    }
}

/// Bisection on χ̃ with QT inner steps, compensation of the upper bound when
/// a round keeps improving, and thresholded binary recovery.
///
/// The local scheme is run from two feasible starts, the even one and one
/// that keeps sources apart, and the better result is returned.
pub fn solve_fronthaul_maxmin(
    problem: &FronthaulProblem,
    cfg: &SurrogateConfig,
    engine: &dyn ConicEngine,
) -> Result<FronthaulSolution> {
    problem.validate()?;
    cfg.check()?;
    let upper0 = rate_upper_bound(problem);
    let mut starts = vec![initial_allocation(problem)];
    let alt = orthogonal_allocation(problem);
    if cfg.two_starts && alt != starts[0] && problem.min_rate(&alt).unwrap_or(0.0) > 0.0 {
        starts.push(alt);
    }
    let mut best: Option<FronthaulSolution> = None;
    for start in starts {
        let sol = climb(problem, cfg, engine, start, upper0)?;
        if best.as_ref().map_or(true, |b| sol.min_rate > b.min_rate) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}

fn climb(
    problem: &FronthaulProblem,
    cfg: &SurrogateConfig,
    engine: &dyn ConicEngine,
    start: Vec<f64>,
    upper0: f64,
) -> Result<FronthaulSolution> {
    let n = problem.vars.len();
    let mut p = start;
    let mut gamma = apply_recovery(problem, &mut p, cfg.zeta);
    if problem.n_rows == 0 || !(upper0 > 0.0) || !upper0.is_finite() {
        let min_rate = problem.min_rate(&p).unwrap_or(0.0).max(0.0);
        return Ok(FronthaulSolution { p, gamma, min_rate, upper0: upper0.max(0.0), lower: 0.0, trace: vec![], warning: None });
    }
    // The start point is feasible, so its rate is a valid lower bound.
    let mut best_rate = problem.min_rate(&p).unwrap_or(0.0);
    // κ tracks the current upper bound, so the stopping gap is relative and
    // rates far below the interference-free bound still resolve.
    let kappa = |up: f64| cfg.kappa_rel * up;
    let mut z = qt_probe(problem, &p, cfg.probe);
    let mut anchors = p.clone();
    let (mut lo, mut up) = (best_rate.min(upper0), upper0);
    let mut compensation = 0.0;
    let mut trace = Vec::new();
    let mut warning = None;
    let mut iteration = 0;
    let mut round = 0;
    loop {
        let round_start = lo;
        let mut steps = 0;
        while up - lo > kappa(up) {
            if steps == cfg.max_bisection {
                warning = Some(format!("bisection cap {} reached in round {round}", cfg.max_bisection));
                break;
            }
            steps += 1;
            iteration += 1;
            // Far from the bracket the interference-free bound can sit orders
            // of magnitude above the answer; halve the ratio, not the gap.
            let chi = if lo > 0.0 && up > 2.0 * lo { (lo * up).sqrt() } else { 0.5 * (lo + up) };
            let step = qt_feasibility_step(problem, &z, chi, &anchors, cfg, engine)?;
            let feasible = step.is_some();
            if let Some(cont) = step {
                let cont = fill_budgets(problem, &cont);
                // The step certifies χ; the point itself usually achieves more.
                lo = lo.max(chi).max(problem.min_rate(&cont).unwrap_or(0.0));
                z = qt_probe(problem, &cont, cfg.probe);
                anchors = cont.clone();
                let mut cand = cont;
                let g = apply_recovery(problem, &mut cand, cfg.zeta);
                let rate = problem.min_rate(&cand).unwrap_or(0.0);
                if rate > best_rate {
                    best_rate = rate;
                    p = cand;
                    gamma = g;
                }
            } else {
                up = chi;
            }
            trace.push(TraceRow { round, iteration, chi, lower: lo, upper: up, feasible });
        }
        round += 1;
        let improved = lo - round_start > kappa(up);
        let chi_com = cfg.chi_com_factor * kappa(up);
        if improved && compensation + chi_com <= cfg.compensation_cap * upper0 && round < cfg.max_outer {
            up = up.max(lo) + chi_com;
            compensation += chi_com;
            continue;
        }
        if improved && round >= cfg.max_outer {
            warning = Some(format!("outer cap {} reached", cfg.max_outer));
        }
        break;
    }
    debug_assert_eq!(p.len(), n);
    Ok(FronthaulSolution { p, gamma, min_rate: best_rate.max(0.0), upper0, lower: lo, trace, warning })
}

/// Variable keys of a built problem, in variable order.
#[derive(Debug, Clone, PartialEq)]
pub enum VarKeys {
    /// (l, u, m)
    Cc(Vec<(usize, usize, usize)>),
    /// (l, q, u, m̄)
    Ca(Vec<(usize, usize, usize, usize)>),
}

/// CPU→CAP problem on `subcarriers`. `si_var[l]` adds to CAP l's floor.
#[allow(clippy::too_many_arguments)]
pub fn build_cc_problem(
    channels: &ChannelSet,
    assignment: &ClusterAssignment,
    precoders: &PrecoderSet,
    subcarriers: &[usize],
    noise: f64,
    si_var: &[f64],
    p_cpu: f64,
    bandwidth: f64,
) -> (FronthaulProblem, VarKeys) {
    let clusters = &assignment.clusters;
    let mut vars = Vec::new();
    let mut keys = Vec::new();
    let mut row = 0;
    for (l, devs) in assignment.served_devices.iter().enumerate() {
        for &u in devs {
            for &m in subcarriers {
                let h = &channels.thz(NodeKey::Cpu, clusters[l].cap)[m];
                let gain = precoders.cc[m][l].as_ref().map_or(0.0, |f| h.dotc(f).norm_sqr());
                vars.push(FhVar { row, group: l * channels.n_subcarriers + m, budget: 0, subcarrier: m, source: l, gain });
                keys.push((l, u, m));
            }
            row += 1;
        }
    }
    let cross = keys
        .iter()
        .map(|&(l, _, m)| {
            let h = &channels.thz(NodeKey::Cpu, clusters[l].cap)[m];
            keys.iter()
                .enumerate()
                .filter(|(_, &(lp, _, mp))| lp != l && mp == m)
                .map(|(j, &(lp, _, _))| (j, precoders.cc[m][lp].as_ref().map_or(0.0, |f| h.dotc(f).norm_sqr())))
                .collect()
        })
        .collect();
    let floor = keys.iter().map(|&(l, _, _)| noise + si_var[l]).collect();
    (FronthaulProblem { vars, cross, floor, budgets: vec![p_cpu], n_rows: row, bandwidth }, VarKeys::Cc(keys))
}

/// CAP→AP problem on `subcarriers`; one budget per cluster that relays.
pub fn build_ca_problem(
    channels: &ChannelSet,
    assignment: &ClusterAssignment,
    precoders: &PrecoderSet,
    subcarriers: &[usize],
    noise: f64,
    p_ap: f64,
    bandwidth: f64,
) -> (FronthaulProblem, VarKeys) {
    let clusters = &assignment.clusters;
    let targets: Vec<Vec<usize>> = clusters.iter().map(|c| c.targets()).collect();
    let n_sc = channels.n_subcarriers;
    let mut vars = Vec::new();
    let mut keys = Vec::new();
    let mut tidx = Vec::new();
    let mut budgets = Vec::new();
    let mut row = 0;
    for (l, c) in clusters.iter().enumerate() {
        if targets[l].is_empty() || assignment.served_devices[l].is_empty() {
            continue;
        }
        let b = budgets.len();
        budgets.push(p_ap);
        for (qi, &q) in targets[l].iter().enumerate() {
            for &u in &assignment.served_devices[l] {
                for &m in subcarriers {
                    let h = &channels.thz(c.cap, NodeKey::Ap(q))[m];
                    let gain = h.dotc(&precoders.ca[l][m][qi]).norm_sqr();
                    vars.push(FhVar { row, group: q * n_sc + m, budget: b, subcarrier: m, source: l, gain });
                    keys.push((l, q, u, m));
                    tidx.push(qi);
                }
                row += 1;
            }
        }
    }
    let cross = keys
        .iter()
        .map(|&(l, q, _, m)| {
            keys.iter()
                .enumerate()
                .filter(|(_, &(lp, qp, _, mp))| mp == m && !(lp == l && qp == q))
                .map(|(j, &(lp, _, _, _))| {
                    let h = &channels.thz(clusters[lp].cap, NodeKey::Ap(q))[m];
                    (j, h.dotc(&precoders.ca[lp][m][tidx[j]]).norm_sqr())
                })
                .collect()
        })
        .collect();
    let floor = vec![noise; keys.len()];
    (FronthaulProblem { vars, cross, floor, budgets, n_rows: row, bandwidth }, VarKeys::Ca(keys))
}
