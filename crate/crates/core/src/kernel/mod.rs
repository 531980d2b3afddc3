//! Work kernels `P(s', w | s)` and the classical Gibbs-stochastic condition.
//!
//! A kernel maps an initial level `s` to a final level `s'` while the weight
//! moves by `w` (positive `w` is work yielded to the weight). It is realizable
//! by a thermal operation exactly when, for every final level,
//! `sum_{s,w} P(s',w|s) exp(beta (E_s' - E_s + w)) = 1`.

mod bath;
mod random;

pub use bath::{realize_finite_bath, BathModel, MicroBlock, Microstate, PermutationRealization};
pub use random::{random_dyadic_kernel, random_kernel, IPF_MAX_SWEEPS, IPF_TOL};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::thermo::{DiagState, EnergySpectrum, ThermalContext};

/// Row sums must equal one to within this tolerance for [`WorkKernel::new`].
pub const ROW_TOL: f64 = 1e-12;

/// Grid values closer than this are merged on construction.
pub const GRID_MERGE_TOL: f64 = 1e-12;

/// Strictly increasing list of work values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkGrid {
    values: Vec<f64>,
}

impl WorkGrid {
    /// Sorts the values and merges near-duplicates (with a warning).
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Grid("work grid must be nonempty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite work value {v}")));
        }
        values.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(values.len());
        for v in values {
            match merged.last() {
                Some(&last) if v - last <= GRID_MERGE_TOL => {
                    if v != last {
                        log::warn!("merging work values {last} and {v} (closer than {GRID_MERGE_TOL:e})");
                    }
                }
                _ => merged.push(v),
            }
        }
        Ok(Self { values: merged })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Index of the grid value within [`GRID_MERGE_TOL`] of `w`.
    pub fn index_of(&self, w: f64) -> Option<usize> {
        let pos = self.values.partition_point(|&v| v < w - GRID_MERGE_TOL);
        (pos < self.values.len() && (self.values[pos] - w).abs() <= GRID_MERGE_TOL).then_some(pos)
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().rev().map(|v| -v).collect(),
        }
    }
}

/// Key of a kernel entry: `(initial level, final level, grid index)`.
pub type EntryKey = (usize, usize, usize);

/// Sparse conditional distribution `P(s', w | s)`.
///
/// Entries are nonnegative and stored in lexicographic key order. Kernels
/// built with [`WorkKernel::new`] are row-normalized; [`WorkKernel::unnormalized`]
/// admits arbitrary nonnegative weights (backward kernels of invalid forward
/// kernels are of this kind).
#[derive(Debug, Clone)]
pub struct WorkKernel {
    initial: EnergySpectrum,
    final_: EnergySpectrum,
    grid: WorkGrid,
    entries: BTreeMap<EntryKey, f64>,
    // Exact source of a kernel produced by `backward_kernel`.
    reverse_of: Option<Arc<WorkKernel>>,
}

impl PartialEq for WorkKernel {
    fn eq(&self, other: &Self) -> bool {
        self.initial == other.initial
            && self.final_ == other.final_
            && self.grid == other.grid
            && self.entries == other.entries
    }
}

impl WorkKernel {
    pub fn new(
        initial: EnergySpectrum,
        final_: EnergySpectrum,
        grid: WorkGrid,
        entries: impl IntoIterator<Item = (EntryKey, f64)>,
    ) -> Result<Self> {
        Self::with_row_tolerance(initial, final_, grid, entries, ROW_TOL)
    }

    pub fn with_row_tolerance(
        initial: EnergySpectrum,
        final_: EnergySpectrum,
        grid: WorkGrid,
        entries: impl IntoIterator<Item = (EntryKey, f64)>,
        tol: f64,
    ) -> Result<Self> {
        let kernel = Self::unnormalized(initial, final_, grid, entries)?;
        for (s, sum) in kernel.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > tol {
                return Err(Error::Kernel(format!(
                    "row '{}' sums to {sum}",
                    kernel.initial.label(s)
                )));
            }
        }
        Ok(kernel)
    }

    pub fn unnormalized(
        initial: EnergySpectrum,
        final_: EnergySpectrum,
        grid: WorkGrid,
        entries: impl IntoIterator<Item = (EntryKey, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((s, sp, k), p) in entries {
            if s >= initial.len() || sp >= final_.len() || k >= grid.len() {
                return Err(Error::Kernel(format!("entry ({s}, {sp}, {k}) is out of range")));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Kernel(format!("entry ({s}, {sp}, {k}) has weight {p}")));
            }
            if p == 0.0 {
                continue;
            }
            if map.insert((s, sp, k), p).is_some() {
                return Err(Error::Kernel(format!("duplicate entry ({s}, {sp}, {k})")));
            }
        }
        Ok(Self {
            initial,
            final_,
            grid,
            entries: map,
            reverse_of: None,
        })
    }

    /// `P(s', 0 | s) = delta_{s s'}` on a fixed Hamiltonian.
    pub fn identity(spectrum: &EnergySpectrum) -> Self {
        let grid = WorkGrid { values: vec![0.0] };
        let entries = (0..spectrum.len()).map(|s| ((s, s, 0), 1.0)).collect();
        Self {
            initial: spectrum.clone(),
            final_: spectrum.clone(),
            grid,
            entries,
            reverse_of: None,
        }
    }

    /// Work-free full thermalization: `P(s', 0 | s) = exp(-beta E_s') / Z`.
    pub fn thermal_reset(spectrum: &EnergySpectrum, ctx: &ThermalContext) -> Self {
        let gibbs = DiagState::gibbs(spectrum, ctx);
        let d = spectrum.len();
        let entries = (0..d)
            .flat_map(|s| (0..d).map(move |sp| (s, sp)))
            .map(|(s, sp)| ((s, sp, 0), gibbs.probs()[sp]))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        Self {
            initial: spectrum.clone(),
            final_: spectrum.clone(),
            grid: WorkGrid { values: vec![0.0] },
            entries,
            reverse_of: None,
        }
    }

    /// Populations unchanged while the Hamiltonian changes:
    /// `P(s', w | s) = delta_{s s'} delta_{w, E_s - E'_s}`.
    pub fn level_transformation(initial: &EnergySpectrum, final_: &EnergySpectrum) -> Result<Self> {
        if initial.len() != final_.len() {
            return Err(Error::dim("level transformation", initial.len(), final_.len()));
        }
        let works: Vec<f64> = (0..initial.len())
            .map(|s| initial.energy(s) - final_.energy(s))
            .collect();
        let grid = WorkGrid::new(works.clone())?;
        let entries = works
            .iter()
            .enumerate()
            .map(|(s, &w)| ((s, s, grid.index_of(w).expect("grid built from works")), 1.0))
            .collect::<Vec<_>>();
        Self::new(initial.clone(), final_.clone(), grid, entries)
    }

    pub fn initial(&self) -> &EnergySpectrum {
        &self.initial
    }

    pub fn final_spectrum(&self) -> &EnergySpectrum {
        &self.final_
    }

    pub fn grid(&self) -> &WorkGrid {
        &self.grid
    }

    pub fn get(&self, s: usize, s_prime: usize, k: usize) -> f64 {
        self.entries.get(&(s, s_prime, k)).copied().unwrap_or(0.0)
    }

    /// Nonzero entries in lexicographic `(s, s', k)` order.
    pub fn iter(&self) -> impl Iterator<Item = (EntryKey, f64)> + '_ {
        self.entries.iter().map(|(&k, &p)| (k, p))
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.initial.len()];
        for ((s, _, _), p) in self.iter() {
            sums[s] += p;
        }
        sums
    }

    /// `exp(beta (E_s' - E_s + w))` for the entry at `(s, s', k)`.
    pub fn gibbs_factor(&self, ctx: &ThermalContext, s: usize, s_prime: usize, k: usize) -> f64 {
        gibbs_exponent(ctx, self.final_.energy(s_prime), self.initial.energy(s), self.grid.value(k)).exp()
    }

    pub fn gibbs_sums(&self, ctx: &ThermalContext) -> Vec<f64> {
        let mut sums = vec![0.0; self.final_.len()];
        for ((s, sp, k), p) in self.iter() {
            sums[sp] += p * self.gibbs_factor(ctx, s, sp, k);
        }
        sums
    }

    pub fn is_row_normalized(&self, tol: f64) -> bool {
        self.row_sums().iter().all(|r| (r - 1.0).abs() <= tol)
    }

    pub fn max_abs_difference(&self, other: &WorkKernel) -> f64 {
        let mut keys: Vec<EntryKey> = self.entries.keys().copied().collect();
        keys.extend(other.entries.keys().copied());
        keys.into_iter()
            .map(|(s, sp, k)| (self.get(s, sp, k) - other.get(s, sp, k)).abs())
            .fold(0.0, f64::max)
    }
}

/// `beta ((E_final - E_initial) + w)`; negating all three arguments negates
/// the result exactly.
pub(crate) fn gibbs_exponent(ctx: &ThermalContext, e_final: f64, e_initial: f64, w: f64) -> f64 {
    ctx.beta() * ((e_final - e_initial) + w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsReport {
    /// `sum_{s,w} P(s',w|s) exp(beta (E_s' - E_s + w))` per final level.
    pub gibbs_sums: Vec<f64>,
    pub row_sums: Vec<f64>,
    pub max_deviation: f64,
    pub max_row_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn validate_gibbs_stochastic(kernel: &WorkKernel, ctx: &ThermalContext, tol: f64) -> GibbsReport {
    let gibbs_sums = kernel.gibbs_sums(ctx);
    let row_sums = kernel.row_sums();
    let max_dev = |v: &[f64]| v.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    let max_deviation = max_dev(&gibbs_sums);
    let max_row_deviation = max_dev(&row_sums);
    GibbsReport {
        pass: max_deviation <= tol && max_row_deviation <= tol,
        gibbs_sums,
        row_sums,
        max_deviation,
        max_row_deviation,
        tol,
    }
}

/// Microscopic reverse `P_back(s, -w | s') = P(s', w | s) exp(beta (E_s' - E_s + w))`.
///
/// Spectra are swapped and the grid negated. The result is row-normalized iff
/// the input is Gibbs-stochastic, and vice versa. Reversing a reversed kernel
/// returns the original entries bit for bit.
pub fn backward_kernel(kernel: &WorkKernel, ctx: &ThermalContext) -> WorkKernel {
    if let Some(source) = &kernel.reverse_of {
        return WorkKernel {
            reverse_of: None,
            ..(**source).clone()
        };
    }
    let report = validate_gibbs_stochastic(kernel, ctx, 1e-9);
    if report.max_deviation > 1e-9 {
        log::warn!(
            "backward kernel of a non-Gibbs-stochastic kernel (max deviation {:.3e}) is not normalized",
            report.max_deviation
        );
    }
    let n = kernel.grid.len();
    let entries = kernel
        .iter()
        .map(|((s, sp, k), p)| ((sp, s, n - 1 - k), p * kernel.gibbs_factor(ctx, s, sp, k)))
        .collect();
    WorkKernel {
        initial: kernel.final_.clone(),
        final_: kernel.initial.clone(),
        grid: kernel.grid.negated(),
        entries,
        reverse_of: Some(Arc::new(WorkKernel {
            reverse_of: None,
            ..kernel.clone()
        })),
    }
}

/// Final populations and work distribution induced by a kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginals {
    pub final_state: DiagState,
    /// Probability of each grid value.
    pub work: Vec<f64>,
    pub mean_work: f64,
}

pub fn marginals(state: &DiagState, kernel: &WorkKernel) -> Result<Marginals> {
    state.check_aligned(kernel.initial())?;
    let mut final_probs = vec![0.0; kernel.final_spectrum().len()];
    let mut work = vec![0.0; kernel.grid().len()];
    for ((s, sp, k), p) in kernel.iter() {
        let joint = state.probs()[s] * p;
        final_probs[sp] += joint;
        work[k] += joint;
    }
    let total: f64 = final_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Kernel(format!(
            "kernel is not row-normalized on the state's support (final mass {total})"
        )));
    }
    let mean_work = work
        .iter()
        .zip(kernel.grid().values())
        .map(|(p, w)| p * w)
        .sum();
    Ok(Marginals {
        final_state: DiagState::from_raw(final_probs),
        work,
        mean_work,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> ThermalContext {
        ThermalContext::new(1.0).unwrap()
    }

    fn qubit() -> EnergySpectrum {
        EnergySpectrum::from_energies(&[0.0, 1.0]).unwrap()
    }

    #[test]
    fn grid_sorting_and_merging() {
        let g = WorkGrid::new(vec![1.0, -1.0, 0.0, 1.0 + 1e-14]).unwrap();
        assert_eq!(g.values(), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.index_of(1.0 + 5e-13), Some(2));
        assert_eq!(g.index_of(0.5), None);
        assert_eq!(g.negated().values(), &[-1.0, -0.0, 1.0]);
        assert!(WorkGrid::new(vec![]).is_err());
        assert!(WorkGrid::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn analytic_kernels_are_gibbs_stochastic() {
        let c = ctx();
        let id = WorkKernel::identity(&qubit());
        let r = validate_gibbs_stochastic(&id, &c, 1e-12);
        assert!(r.pass);
        assert_eq!(r.max_deviation, 0.0);

        let reset = WorkKernel::thermal_reset(&qubit(), &c);
        let r = validate_gibbs_stochastic(&reset, &c, 1e-12);
        assert!(r.pass, "{r:?}");

        let fin = EnergySpectrum::from_energies(&[0.3, 2.0]).unwrap();
        let lt = WorkKernel::level_transformation(&qubit(), &fin).unwrap();
        let r = validate_gibbs_stochastic(&lt, &c, 1e-12);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn violation_is_reported_not_raised() {
        let c = ctx();
        let k = WorkKernel::new(
            qubit(),
            qubit(),
            WorkGrid::new(vec![0.0]).unwrap(),
            vec![((0, 1, 0), 1.0), ((1, 1, 0), 1.0)],
        )
        .unwrap();
        let r = validate_gibbs_stochastic(&k, &c, 1e-12);
        assert!(!r.pass);
        assert!((r.gibbs_sums[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn row_normalization_enforced() {
        let err = WorkKernel::new(
            qubit(),
            qubit(),
            WorkGrid::new(vec![0.0]).unwrap(),
            vec![((0, 0, 0), 0.9), ((1, 1, 0), 1.0)],
        );
        assert!(matches!(err, Err(Error::Kernel(_))));
        assert!(WorkKernel::unnormalized(
            qubit(),
            qubit(),
            WorkGrid::new(vec![0.0]).unwrap(),
            vec![((0, 0, 0), -0.1)],
        )
        .is_err());
    }

    #[test]
    fn backward_examples() {
        let c = ctx();
        let id = WorkKernel::identity(&qubit());
        assert_eq!(backward_kernel(&id, &c), id);

        let fin = EnergySpectrum::from_energies(&[0.5, -1.0]).unwrap();
        let lt = WorkKernel::level_transformation(&qubit(), &fin).unwrap();
        let inv = WorkKernel::level_transformation(&fin, &qubit()).unwrap();
        let back = backward_kernel(&lt, &c);
        assert!(back.max_abs_difference(&inv) < 1e-15);

        let reset = WorkKernel::thermal_reset(&qubit(), &c);
        let back = backward_kernel(&reset, &c);
        assert!(back.max_abs_difference(&reset) < 1e-15);
        assert_eq!(backward_kernel(&back, &c), reset);
    }

    #[test]
    fn marginal_examples() {
        let c = ctx();
        let st = DiagState::new(vec![0.3, 0.7]).unwrap();
        let m = marginals(&st, &WorkKernel::identity(&qubit())).unwrap();
        assert_eq!(m.final_state, st);
        assert_eq!(m.work, vec![1.0]);

        let pure = DiagState::new(vec![1.0, 0.0]).unwrap();
        let m = marginals(&pure, &WorkKernel::thermal_reset(&qubit(), &c)).unwrap();
        assert!((m.final_state.probs()[0] - 0.731059).abs() < 1e-6);
        assert!((m.final_state.probs()[1] - 0.268941).abs() < 1e-6);

        let flat = EnergySpectrum::from_energies(&[0.0, 0.0]).unwrap();
        let lt = WorkKernel::level_transformation(&flat, &qubit()).unwrap();
        let m = marginals(&DiagState::uniform(2).unwrap(), &lt).unwrap();
        let w_minus = lt.grid().index_of(-1.0).unwrap();
        let w_zero = lt.grid().index_of(0.0).unwrap();
        assert_eq!(m.work[w_minus], 0.5);
        assert_eq!(m.work[w_zero], 0.5);
        assert_eq!(m.mean_work, -0.5);

        let bad = DiagState::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(marginals(&bad, &lt).is_err());
    }
}
