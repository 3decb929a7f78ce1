//! Minimal conic-program builder over a pluggable engine. The default engine
//! is Clarabel; the solvers above only ever see [`ConicProblem`] and
//! [`ConicOutcome`].

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    SupportedConeT::{ExponentialConeT, NonnegativeConeT, SecondOrderConeT, ZeroConeT},
};

/// Affine expression `constant + Σ coef·x[var]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { constant: c, terms: Vec::new() }
    }

    pub fn var(i: usize, coef: f64) -> Self {
        Affine { constant: 0.0, terms: vec![(i, coef)] }
    }

    pub fn plus(mut self, i: usize, coef: f64) -> Self {
        self.terms.push((i, coef));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// expression = 0
    Zero,
    /// expression ≥ 0
    Nonneg,
    /// (t, x…): ‖x‖ ≤ t
    Soc,
    /// (x, y, z): y·exp(x/y) ≤ z, y > 0
    Exp,
}

/// minimize cᵀx subject to each block of affine expressions lying in its cone.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<(ConeKind, Vec<Affine>)>,
}

impl ConicProblem {
    pub fn new(n_vars: usize) -> Self {
        ConicProblem { n_vars, objective: vec![0.0; n_vars], blocks: Vec::new() }
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.objective.push(0.0);
        self.n_vars - 1
    }

    pub fn push(&mut self, kind: ConeKind, exprs: Vec<Affine>) {
        debug_assert!(kind != ConeKind::Exp || exprs.len() == 3);
        self.blocks.push((kind, exprs));
    }

    pub fn nonneg(&mut self, e: Affine) {
        self.push(ConeKind::Nonneg, vec![e]);
    }

    /// Largest violation of any cone membership at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (kind, exprs) in &self.blocks {
            let v: Vec<f64> = exprs.iter().map(|e| e.eval(x)).collect();
            let viol = match kind {
                ConeKind::Zero => v.iter().map(|a| a.abs()).fold(0.0, f64::max),
                ConeKind::Nonneg => v.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max),
                ConeKind::Soc => (v[1..].iter().map(|a| a * a).sum::<f64>().sqrt() - v[0]).max(0.0),
                ConeKind::Exp => {
                    if v[1] > 0.0 {
                        (v[1] * (v[0] / v[1]).exp() - v[2]).max(0.0)
                    } else {
                        (-v[1]).max(0.0) + (-v[2]).max(0.0)
                    }
                }
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConicOutcome {
    Solved { x: Vec<f64>, objective: f64 },
    Infeasible,
    Failed(String),
}

pub trait ConicEngine: Send + Sync {
    fn solve(&self, problem: &ConicProblem) -> ConicOutcome;
}

#[derive(Debug, Clone)]
pub struct ClarabelEngine {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelEngine {
    fn default() -> Self {
        ClarabelEngine { max_iter: 200, tol: 1e-8 }
    }
}

impl ConicEngine for ClarabelEngine {
    fn solve(&self, pr: &ConicProblem) -> ConicOutcome {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        // Clarabel wants Ax + s = b with s in K, so s = e means A = −coef, b = constant.
        let mut push_rows = |exprs: &[Affine], rows: &mut Vec<usize>, b: &mut Vec<f64>| {
            for e in exprs {
                let r = b.len();
                for &(i, c) in &e.terms {
                    if c != 0.0 {
                        rows.push(r);
                        cols.push(i);
                        vals.push(-c);
                    }
                }
                b.push(e.constant);
            }
        };
        for (kind, exprs) in &pr.blocks {
            push_rows(exprs, &mut rows, &mut b);
            let cone = match kind {
                ConeKind::Zero => ZeroConeT(exprs.len()),
                ConeKind::Nonneg => NonnegativeConeT(exprs.len()),
                ConeKind::Soc => SecondOrderConeT(exprs.len()),
                ConeKind::Exp => ExponentialConeT(),
            };
            match (cones.last_mut(), &cone) {
                (Some(ZeroConeT(k)), ZeroConeT(n)) => *k += n,
                (Some(NonnegativeConeT(k)), NonnegativeConeT(n)) => *k += n,
                _ => cones.push(cone),
            }
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, pr.n_vars, rows, cols, vals);
        let p = CscMatrix::zeros((pr.n_vars, pr.n_vars));
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
        {
            Ok(s) => s,
            Err(e) => return ConicOutcome::Failed(format!("settings: {e:?}")),
        };
        let mut solver = match DefaultSolver::new(&p, &pr.objective, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return ConicOutcome::Failed(format!("setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                ConicOutcome::Solved { x: sol.x.clone(), objective: sol.obj_val }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicOutcome::Infeasible,
            s => ConicOutcome::Failed(format!("{s:?}")),
        }
    }
}
