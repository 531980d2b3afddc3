//! Thermo-majorization curves and linear programs over Gibbs-stochastic kernels.

mod simplex;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{EntryKey, WorkGrid, WorkKernel};
use crate::thermo::{DiagState, EnergySpectrum, ThermalContext};
use simplex::{LinearProgram, Outcome, RowKind, PIVOT_TOL};

/// Tolerance for LP constraint residuals and final-marginal reproduction.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermoCurve {
    /// Starts at `(0, 0)` and ends at `(Z, 1)`.
    pub vertices: Vec<(f64, f64)>,
}

impl ThermoCurve {
    /// Piecewise-linear value at `x`, held at the last height beyond the end.
    pub fn eval(&self, x: f64) -> f64 {
        let v = &self.vertices;
        if x <= 0.0 {
            return 0.0;
        }
        let i = v.partition_point(|p| p.0 < x);
        if i >= v.len() {
            return v[v.len() - 1].1;
        }
        let (x1, y1) = v[i];
        let (x0, y0) = v[i - 1];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn end(&self) -> f64 {
        self.vertices[self.vertices.len() - 1].0
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.vertices
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }
}

/// Sorts levels by `p_s exp(beta E_s)` (ties by index) and accumulates
/// `(exp(-beta E_s), p_s)`.
pub fn build_curve(state: &DiagState, spectrum: &EnergySpectrum, ctx: &ThermalContext) -> Result<ThermoCurve> {
    state.check_aligned(spectrum)?;
    let beta = ctx.beta();
    let mut order: Vec<usize> = (0..state.len()).collect();
    let key = |s: usize| state.probs()[s] * (beta * spectrum.energy(s)).exp();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let mut vertices = vec![(0.0, 0.0)];
    let (mut x, mut y) = (0.0, 0.0);
    for s in order {
        x += ctx.boltzmann(spectrum.energy(s));
        y += state.probs()[s];
        vertices.push((x, y));
    }
    let curve = ThermoCurve { vertices };
    debug_assert!(curve.slopes().windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300));
    Ok(curve)
}

/// `a(x) >= b(x) - tol` at every vertex abscissa of either curve.
pub fn curve_dominates(a: &ThermoCurve, b: &ThermoCurve, tol: f64) -> bool {
    a.vertices
        .iter()
        .chain(&b.vertices)
        .all(|&(x, _)| a.eval(x) >= b.eval(x) - tol)
}

/// Work `w_{s s'} = alpha_{s'} - gamma_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkShiftForm {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl WorkShiftForm {
    pub fn new(gamma: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if gamma.iter().chain(&alpha).any(|v| !v.is_finite()) {
            return Err(Error::Argument("work shifts must be finite".into()));
        }
        Ok(Self { gamma, alpha })
    }

    pub fn work(&self, s: usize, s_prime: usize) -> f64 {
        self.alpha[s_prime] - self.gamma[s]
    }
}

/// Decides the transition `(rho, E) -> (sigma, E')` with shift-form work by
/// comparing curves on the shifted spectra `E_s + gamma_s` and
/// `E'_s' + alpha_s'`.
///
/// Exact Gibbs-stochasticity forces equal shifted partition functions, so
/// unequal ones (relative difference above `1e-9`) are infeasible.
pub fn feasible_with_shift(
    initial: (&DiagState, &EnergySpectrum),
    final_: (&DiagState, &EnergySpectrum),
    shift: &WorkShiftForm,
    ctx: &ThermalContext,
) -> Result<bool> {
    let e = initial.1.shifted(&shift.gamma)?;
    let ep = final_.1.shifted(&shift.alpha)?;
    let (z, zp) = (e.partition_function(ctx), ep.partition_function(ctx));
    if (z - zp).abs() > LP_TOL * z.max(zp) {
        return Ok(false);
    }
    let a = build_curve(initial.0, &e, ctx)?;
    let b = build_curve(final_.0, &ep, ctx)?;
    Ok(curve_dominates(&a, &b, LP_TOL))
}

#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    pub ctx: ThermalContext,
    pub initial_state: DiagState,
    pub initial_spectrum: EnergySpectrum,
    pub final_state: DiagState,
    pub final_spectrum: EnergySpectrum,
    pub grid: WorkGrid,
    /// Required probability of each grid value.
    pub work_marginal: Option<Vec<f64>>,
    /// Allowed `(s, s', k)`; all triples when `None`.
    pub support: Option<BTreeSet<EntryKey>>,
    /// Relaxes the Gibbs sums to `<= 1`. The deficit stands for branches of
    /// vanishing probability and diverging work, as in the full-rank limit;
    /// needed for exact erasure to a pure state.
    pub closure: bool,
}

impl FeasibilityProblem {
    pub fn new(
        ctx: ThermalContext,
        initial: (DiagState, EnergySpectrum),
        final_: (DiagState, EnergySpectrum),
        grid: WorkGrid,
    ) -> Result<Self> {
        initial.0.check_aligned(&initial.1)?;
        final_.0.check_aligned(&final_.1)?;
        Ok(Self {
            ctx,
            initial_state: initial.0,
            initial_spectrum: initial.1,
            final_state: final_.0,
            final_spectrum: final_.1,
            grid,
            work_marginal: None,
            support: None,
            closure: false,
        })
    }

    /// Grid of attainable values `alpha_s' - gamma_s`, each pair `(s, s')`
    /// restricted to its own value.
    pub fn from_shift_form(
        ctx: ThermalContext,
        initial: (DiagState, EnergySpectrum),
        final_: (DiagState, EnergySpectrum),
        shift: &WorkShiftForm,
    ) -> Result<Self> {
        let (d, dp) = (initial.1.len(), final_.1.len());
        if shift.gamma.len() != d {
            return Err(Error::dim("gamma", d, shift.gamma.len()));
        }
        if shift.alpha.len() != dp {
            return Err(Error::dim("alpha", dp, shift.alpha.len()));
        }
        let values: Vec<f64> = (0..d).flat_map(|s| (0..dp).map(move |sp| (s, sp))).map(|(s, sp)| shift.work(s, sp)).collect();
        let grid = WorkGrid::new(values)?;
        let mut support = BTreeSet::new();
        for s in 0..d {
            for sp in 0..dp {
                let k = grid
                    .index_of(shift.work(s, sp))
                    .ok_or_else(|| Error::Grid("shift value missing from grid".into()))?;
                support.insert((s, sp, k));
            }
        }
        let mut p = Self::new(ctx, initial, final_, grid)?;
        p.support = Some(support);
        Ok(p)
    }

    pub fn with_work_marginal(mut self, marginal: Vec<f64>) -> Result<Self> {
        if marginal.len() != self.grid.len() {
            return Err(Error::dim("work marginal", self.grid.len(), marginal.len()));
        }
        self.work_marginal = Some(marginal);
        Ok(self)
    }

    pub fn with_closure(mut self) -> Self {
        self.closure = true;
        self
    }

    fn variables(&self) -> Vec<EntryKey> {
        let (d, dp, n) = (self.initial_spectrum.len(), self.final_spectrum.len(), self.grid.len());
        let mut vars = Vec::new();
        for s in 0..d {
            for sp in 0..dp {
                for k in 0..n {
                    if self.support.as_ref().is_none_or(|set| set.contains(&(s, sp, k))) {
                        vars.push((s, sp, k));
                    }
                }
            }
        }
        vars
    }

    /// Rows: normalization per `s`, Gibbs sum per `s'`, final marginal per
    /// `s'`, work marginal per `k`. Each row is scaled to unit max coefficient.
    fn program(&self, vars: &[EntryKey], maximize_work: bool) -> (LinearProgram, Vec<String>) {
        let (d, dp, n) = (self.initial_spectrum.len(), self.final_spectrum.len(), self.grid.len());
        let p = self.initial_state.probs();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut kinds = Vec::new();
        let mut names = Vec::new();
        let mut push = |row: Vec<f64>, rhs: f64, kind: RowKind, name: String| {
            let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            a.push(row.iter().map(|v| v / scale).collect());
            b.push(rhs / scale);
            kinds.push(kind);
            names.push(name);
        };
        for s in 0..d {
            let row = vars.iter().map(|&(vs, _, _)| if vs == s { 1.0 } else { 0.0 }).collect();
            push(row, 1.0, RowKind::Eq, format!("row {s}"));
        }
        let gibbs_kind = if self.closure { RowKind::Le } else { RowKind::Eq };
        for sp in 0..dp {
            let row = vars
                .iter()
                .map(|&(s, vsp, k)| {
                    if vsp == sp {
                        (self.ctx.beta()
                            * ((self.final_spectrum.energy(sp) - self.initial_spectrum.energy(s)) + self.grid.value(k)))
                        .exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            push(row, 1.0, gibbs_kind, format!("gibbs {sp}"));
        }
        for sp in 0..dp {
            let row = vars.iter().map(|&(s, vsp, _)| if vsp == sp { p[s] } else { 0.0 }).collect();
            push(row, self.final_state.probs()[sp], RowKind::Eq, format!("final {sp}"));
        }
        if let Some(q) = &self.work_marginal {
            for k in 0..n {
                let row = vars.iter().map(|&(s, _, vk)| if vk == k { p[s] } else { 0.0 }).collect();
                push(row, q[k], RowKind::Eq, format!("work {k}"));
            }
        }
        let c = vars
            .iter()
            .map(|&(s, _, k)| if maximize_work { p[s] * self.grid.value(k) } else { 0.0 })
            .collect();
        (LinearProgram { a, b, kinds, c }, names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Feasible,
    Infeasible,
    Optimal,
}

#[derive(Debug, Clone, Serialize)]
pub struct LPSolution {
    pub status: LpStatus,
    #[serde(skip)]
    pub kernel: Option<WorkKernel>,
    /// Expected work of the returned kernel.
    pub objective: Option<f64>,
    /// Farkas multipliers per constraint row when infeasible.
    pub certificate: Option<Vec<f64>>,
    pub constraint_names: Vec<String>,
    /// `F(rho) - F(sigma)`.
    pub free_energy_bound: f64,
    /// `bound - objective` at the optimum.
    pub gap: Option<f64>,
    pub warning: Option<String>,
}

fn solve(problem: &FeasibilityProblem, maximize_work: bool) -> Result<LPSolution> {
    let vars = problem.variables();
    let (lp, names) = problem.program(&vars, maximize_work);
    let ctx = &problem.ctx;
    let free_energy_bound = problem.initial_state.free_energy(&problem.initial_spectrum, ctx)
        - problem.final_state.free_energy(&problem.final_spectrum, ctx);
    let mut out = LPSolution {
        status: LpStatus::Infeasible,
        kernel: None,
        objective: None,
        certificate: None,
        constraint_names: names,
        free_energy_bound,
        gap: None,
        warning: None,
    };
    match lp.solve() {
        Outcome::Infeasible { certificate, phase_one } => {
            if phase_one < 1e3 * PIVOT_TOL {
                out.warning = Some(format!("near-feasible: phase-one residual {phase_one:.3e}"));
            }
            out.certificate = Some(certificate);
        }
        Outcome::Unbounded => {
            return Err(Error::Precondition("linear program reported unbounded on a compact polytope".into()));
        }
        Outcome::Stalled => {
            out.warning = Some("pivot budget exhausted; problem is numerically degenerate".into());
        }
        Outcome::Optimal { x, .. } => {
            let kernel = WorkKernel::with_row_tolerance(
                problem.initial_spectrum.clone(),
                problem.final_spectrum.clone(),
                problem.grid.clone(),
                vars.iter().copied().zip(x),
                LP_TOL,
            )?;
            let objective: f64 = kernel
                .iter()
                .map(|((s, _, k), p)| problem.initial_state.probs()[s] * p * problem.grid.value(k))
                .sum();
            out.status = if maximize_work { LpStatus::Optimal } else { LpStatus::Feasible };
            out.objective = Some(objective);
            if maximize_work {
                out.gap = Some(free_energy_bound - objective);
            }
            out.kernel = Some(kernel);
        }
    }
    Ok(out)
}

/// Existence of a Gibbs-stochastic kernel on the grid mapping the initial
/// state to the final one.
pub fn feasible_lp(problem: &FeasibilityProblem) -> Result<LPSolution> {
    solve(problem, false)
}

/// Largest `<w>` over the same polytope; never above `F(rho) - F(sigma)`.
pub fn optimal_expected_work(problem: &FeasibilityProblem) -> Result<LPSolution> {
    solve(problem, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::validate_gibbs_stochastic;

    fn ctx() -> ThermalContext {
        ThermalContext::new(1.0).unwrap()
    }

    fn spec(e: &[f64]) -> EnergySpectrum {
        EnergySpectrum::from_energies(e).unwrap()
    }

    fn st(p: &[f64]) -> DiagState {
        DiagState::new(p.to_vec()).unwrap()
    }

    #[test]
    fn curve_examples() {
        let c = ctx();
        let e = spec(&[0.0, 1.0]);
        let k = build_curve(&st(&[0.5, 0.5]), &e, &c).unwrap();
        let expected = [(0.0, 0.0), (0.36787944117144233, 0.5), (1.3678794411714423, 1.0)];
        for (v, x) in k.vertices.iter().zip(expected) {
            assert!((v.0 - x.0).abs() < 1e-15 && (v.1 - x.1).abs() < 1e-15);
        }
        let pure = build_curve(&st(&[1.0, 0.0]), &spec(&[0.0, 0.0]), &c).unwrap();
        assert_eq!(pure.vertices, vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]);

        let g = build_curve(&DiagState::gibbs(&e, &c), &e, &c).unwrap();
        let slopes = g.slopes();
        assert!(slopes.iter().all(|s| (s - slopes[0]).abs() < 1e-12));
    }

    #[test]
    fn dominance_examples() {
        let c = ctx();
        let e = spec(&[0.0, 1.0]);
        let gibbs = build_curve(&DiagState::gibbs(&e, &c), &e, &c).unwrap();
        let pure = build_curve(&st(&[1.0, 0.0]), &e, &c).unwrap();
        assert!(curve_dominates(&gibbs, &gibbs, 0.0));
        assert!(curve_dominates(&pure, &gibbs, 1e-12));
        assert!(!curve_dominates(&gibbs, &pure, 1e-12));

        // Crossing curves: rho is below sigma at x = 1/e and above it at x = 1.
        let a = build_curve(&st(&[0.9, 0.1]), &e, &c).unwrap();
        let b = build_curve(&st(&[0.3, 0.7]), &e, &c).unwrap();
        assert!(!curve_dominates(&a, &b, 1e-12) && !curve_dominates(&b, &a, 1e-12));
    }

    #[test]
    fn tie_order_does_not_change_dominance() {
        let c = ctx();
        let e = spec(&[0.0, 0.0, 0.5]);
        let s = st(&[0.3, 0.3, 0.4]);
        let a = build_curve(&s, &e, &c).unwrap();
        let e_swapped = spec(&[0.0, 0.0, 0.5]);
        let b = build_curve(&st(&[0.3, 0.3, 0.4]), &e_swapped, &c).unwrap();
        assert!(curve_dominates(&a, &b, 1e-15) && curve_dominates(&b, &a, 1e-15));
    }

    #[test]
    fn shift_examples() {
        let c = ctx();
        let e = spec(&[0.0, 0.7]);
        let zero = WorkShiftForm::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        for p in [0.1, 0.5, 0.99] {
            let gibbs = DiagState::gibbs(&e, &c);
            assert!(feasible_with_shift((&st(&[p, 1.0 - p]), &e), (&gibbs, &e), &zero, &c).unwrap());
        }
        let flat = WorkShiftForm::new(vec![-0.0, -0.7], vec![-0.0, -0.7]).unwrap();
        assert!(!feasible_with_shift((&st(&[0.5, 0.5]), &e), (&st(&[1.0, 0.0]), &e), &flat, &c).unwrap());
        // Reversible: both shifted curves are the same straight line.
        let rho = st(&[0.8, 0.2]);
        let sigma = st(&[0.3, 0.7]);
        let shift = WorkShiftForm::new(
            vec![-0.8f64.ln() - 0.0, -0.2f64.ln() - 0.7],
            vec![-0.3f64.ln() - 0.0, -0.7f64.ln() - 0.7],
        )
        .unwrap();
        assert!(feasible_with_shift((&rho, &e), (&sigma, &e), &shift, &c).unwrap());
        assert!(feasible_with_shift((&sigma, &e), (&rho, &e), &WorkShiftForm::new(shift.alpha.clone(), shift.gamma.clone()).unwrap(), &c).unwrap());
    }

    #[test]
    fn identity_problem_is_feasible() {
        let c = ctx();
        let e = spec(&[0.0, 1.0]);
        let rho = st(&[0.4, 0.6]);
        let grid = WorkGrid::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let prob = FeasibilityProblem::new(c, (rho.clone(), e.clone()), (rho.clone(), e.clone()), grid).unwrap();
        let sol = feasible_lp(&prob).unwrap();
        assert_eq!(sol.status, LpStatus::Feasible);
        let k = sol.kernel.unwrap();
        assert!(validate_gibbs_stochastic(&k, &c, 1e-9).pass);
        let opt = optimal_expected_work(&prob).unwrap();
        assert!(opt.objective.unwrap() <= opt.free_energy_bound + 1e-9);
        assert!(opt.objective.unwrap().abs() < 1e-9);
    }

    #[test]
    fn erasure_with_zero_work_is_infeasible() {
        let c = ctx();
        let e = spec(&[0.0, 0.0]);
        let grid = WorkGrid::new(vec![0.0]).unwrap();
        for closure in [false, true] {
            let mut prob =
                FeasibilityProblem::new(c, (st(&[0.5, 0.5]), e.clone()), (st(&[1.0, 0.0]), e.clone()), grid.clone()).unwrap();
            prob.closure = closure;
            let sol = feasible_lp(&prob).unwrap();
            assert_eq!(sol.status, LpStatus::Infeasible);
            assert!(sol.certificate.is_some());
        }
    }

    #[test]
    fn erasure_optimum_approaches_landauer() {
        let c = ctx();
        let e = spec(&[0.0, 0.0]);
        let mut last = f64::NEG_INFINITY;
        for m in 2..7 {
            let h = 0.5f64.powi(m);
            let grid = WorkGrid::new((0..=(2.0 / h) as i32).map(|i| -2.0 + i as f64 * h + 0.3 * h).collect()).unwrap();
            let prob = FeasibilityProblem::new(c, (st(&[0.5, 0.5]), e.clone()), (st(&[1.0, 0.0]), e.clone()), grid)
                .unwrap()
                .with_closure();
            let sol = optimal_expected_work(&prob).unwrap();
            let w = sol.objective.unwrap();
            assert!(w <= -std::f64::consts::LN_2 + 1e-9);
            assert!(w >= -std::f64::consts::LN_2 - h, "{m} {w}");
            assert!(w >= last - 1e-12);
            last = w;
        }
    }
}
