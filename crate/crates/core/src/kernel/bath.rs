//! Explicit finite-bath realization of a Gibbs-stochastic kernel.
//!
//! The bath has levels `j * delta` for `j` in `[-M, M]` with degeneracy
//! `Omega_j = 2^(M + j)`, which is the exponential density of states of an
//! infinite reservoir under the choice `beta * delta = ln 2`. For every
//! transition `s -> s'` with work `w`, a fraction `P(s', w | s)` of the bath
//! microstates at energy `eps` is sent to energy
//! `eps' = eps + E_s - E_s' - w`. Blocks of microstates are moved as
//! contiguous index ranges, so the map is stored and checked block by block.
//!
//! Targets near the truncation edge receive fewer microstates than they
//! hold; sources feeding them are left in place and counted in
//! [`PermutationRealization::boundary_fraction`].

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{WorkGrid, WorkKernel};
use crate::error::{Error, Result};
use crate::thermo::ThermalContext;

/// Relative tolerance when reading energies as lattice multiples.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BathModel {
    pub delta: f64,
    pub half_range: u32,
}

impl BathModel {
    /// The canonical bath: `delta = T ln 2`.
    pub fn canonical(ctx: &ThermalContext, half_range: u32) -> Result<Self> {
        Self::new(std::f64::consts::LN_2 / ctx.beta(), half_range)
    }

    pub fn new(delta: f64, half_range: u32) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Argument(format!("bath spacing must be positive, got {delta}")));
        }
        if half_range > 60 {
            return Err(Error::Argument("bath half range above 60 overflows the microstate counter".into()));
        }
        Ok(Self { delta, half_range })
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i64> {
        let m = self.half_range as i64;
        -m..=m
    }

    /// `Omega_j = 2^(M + j)`; zero outside the window.
    pub fn degeneracy(&self, j: i64) -> u128 {
        let m = self.half_range as i64;
        if j < -m || j > m {
            0
        } else {
            1u128 << (m + j) as u32
        }
    }

    /// Total number of bath microstates in the window.
    pub fn size(&self) -> u128 {
        (1u128 << (2 * self.half_range + 1)) - 1
    }
}

/// A microstate `(system level, bath level j, index k < Omega_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Microstate {
    pub level: usize,
    pub bath_level: i64,
    pub index: u128,
}

/// A contiguous range of source microstates moved as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MicroBlock {
    pub source_level: usize,
    pub source_bath: i64,
    pub source_start: u128,
    pub len: u128,
    pub target_level: usize,
    pub target_bath: i64,
    pub target_start: u128,
    /// Work in units of `delta`.
    pub work_units: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationRealization {
    pub bath: BathModel,
    /// Initial and final system energies and grid values in units of `delta`.
    pub initial_units: Vec<i64>,
    pub final_units: Vec<i64>,
    pub work_units: Vec<i64>,
    pub denom_bits: u32,
    /// Integer numerators of the dyadic kernel, keyed like kernel entries.
    pub numerators: BTreeMap<(usize, usize, usize), u128>,
    /// Mapped blocks sorted by source.
    pub blocks: Vec<MicroBlock>,
    /// Target cells `(s', j')` whose microstates are fully covered.
    pub interior_targets: BTreeSet<(usize, i64)>,
    pub boundary_fraction: f64,
    /// Kernel read back from the map by preimage counting.
    #[serde(skip)]
    pub induced: WorkKernel,
    #[serde(skip)]
    pub dyadic: WorkKernel,
    pub max_input_error: f64,
}

impl PermutationRealization {
    fn total_microstates(&self) -> u128 {
        self.initial_units.len() as u128 * self.bath.size()
    }

    /// Image of a microstate; unmapped microstates are fixed points.
    pub fn image(&self, state: Microstate) -> Microstate {
        match self.block_of(state) {
            Some(b) => Microstate {
                level: b.target_level,
                bath_level: b.target_bath,
                index: b.target_start + (state.index - b.source_start),
            },
            None => state,
        }
    }

    /// Whether the microstate belongs to a mapped block.
    pub fn is_mapped(&self, state: Microstate) -> bool {
        self.block_of(state).is_some()
    }

    fn block_of(&self, state: Microstate) -> Option<&MicroBlock> {
        let key = (state.level, state.bath_level, state.index);
        let pos = self
            .blocks
            .partition_point(|b| (b.source_level, b.source_bath, b.source_start) <= key);
        if pos == 0 {
            return None;
        }
        let b = &self.blocks[pos - 1];
        (b.source_level == state.level
            && b.source_bath == state.bath_level
            && state.index < b.source_start + b.len)
            .then_some(b)
    }

    /// Checks that mapped source ranges are disjoint, that target ranges are
    /// disjoint and tile every interior target cell, and that every block
    /// lies inside its cells.
    pub fn check_bijection(&self) -> std::result::Result<(), String> {
        let check_disjoint = |mut ranges: Vec<(usize, i64, u128, u128)>, what: &str| {
            ranges.sort_unstable();
            for pair in ranges.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.0 == b.0 && a.1 == b.1 && a.2 + a.3 > b.2 {
                    return Err(format!("overlapping {what} ranges at level {} bath {}", a.0, a.1));
                }
            }
            Ok(())
        };
        for b in &self.blocks {
            if b.source_start + b.len > self.bath.degeneracy(b.source_bath) {
                return Err(format!("source block exceeds cell ({}, {})", b.source_level, b.source_bath));
            }
            if b.target_start + b.len > self.bath.degeneracy(b.target_bath) {
                return Err(format!("target block exceeds cell ({}, {})", b.target_level, b.target_bath));
            }
        }
        check_disjoint(
            self.blocks.iter().map(|b| (b.source_level, b.source_bath, b.source_start, b.len)).collect(),
            "source",
        )?;
        check_disjoint(
            self.blocks.iter().map(|b| (b.target_level, b.target_bath, b.target_start, b.len)).collect(),
            "target",
        )?;
        let mut covered: BTreeMap<(usize, i64), u128> = BTreeMap::new();
        for b in &self.blocks {
            *covered.entry((b.target_level, b.target_bath)).or_default() += b.len;
        }
        for &(sp, jp) in &self.interior_targets {
            let got = covered.get(&(sp, jp)).copied().unwrap_or(0);
            if got != self.bath.degeneracy(jp) {
                return Err(format!("target cell ({sp}, {jp}) covered {got} of {}", self.bath.degeneracy(jp)));
            }
        }
        if covered.keys().any(|k| !self.interior_targets.contains(k)) {
            return Err("a block lands outside the interior".into());
        }
        Ok(())
    }

    /// `E_s + eps = E_s' + eps' + w` on every mapped block, in lattice units.
    pub fn conserves_energy(&self) -> bool {
        self.blocks.iter().all(|b| {
            self.initial_units[b.source_level] + b.source_bath
                == self.final_units[b.target_level] + b.target_bath + b.work_units
        })
    }

    /// For every interior `(s', j')`:
    /// `sum_{s,w} n(s',w|s) * Omega(j' + e_s' + w - e_s) = 2^D * Omega(j')`,
    /// evaluated in integers.
    pub fn counting_identity_holds(&self) -> bool {
        self.interior_targets.iter().all(|&(sp, jp)| {
            let incoming: u128 = self
                .numerators
                .iter()
                .filter(|((_, t, _), _)| *t == sp)
                .map(|(&(s, _, k), &n)| {
                    let j = jp + self.final_units[sp] + self.work_units[k] - self.initial_units[s];
                    n * self.bath.degeneracy(j)
                })
                .sum();
            incoming == self.bath.degeneracy(jp) << self.denom_bits
        })
    }

    pub fn num_mapped(&self) -> u128 {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn num_boundary(&self) -> u128 {
        self.total_microstates() - self.num_mapped()
    }
}

fn to_lattice(value: f64, delta: f64, what: &str) -> Result<i64> {
    let x = value / delta;
    let r = x.round();
    if (x - r).abs() > LATTICE_TOL * (1.0 + x.abs()) {
        return Err(Error::Commensurability(format!(
            "{what} {value} is not an integer multiple of {delta}"
        )));
    }
    Ok(r as i64)
}

/// Builds the block permutation realizing `kernel` on a truncated bath.
///
/// Entries are rounded to multiples of `2^-denom_bits`; the rounded kernel
/// must satisfy both row normalization and the Gibbs-stochastic condition
/// exactly in integer arithmetic.
pub fn realize_finite_bath(
    kernel: &WorkKernel,
    bath: &BathModel,
    ctx: &ThermalContext,
    denom_bits: u32,
) -> Result<PermutationRealization> {
    if (ctx.beta() * bath.delta - std::f64::consts::LN_2).abs() > 1e-12 {
        return Err(Error::Argument(format!(
            "finite-bath realization needs beta * delta = ln 2, got {}",
            ctx.beta() * bath.delta
        )));
    }
    if denom_bits > 48 {
        return Err(Error::Argument("denom_bits above 48 is not supported".into()));
    }
    let delta = bath.delta;
    let m = bath.half_range as i64;
    let d = kernel.initial().len();
    let initial_units = (0..d)
        .map(|s| to_lattice(kernel.initial().energy(s), delta, "initial energy"))
        .collect::<Result<Vec<_>>>()?;
    let final_units = (0..kernel.final_spectrum().len())
        .map(|s| to_lattice(kernel.final_spectrum().energy(s), delta, "final energy"))
        .collect::<Result<Vec<_>>>()?;
    let work_units = kernel
        .grid()
        .values()
        .iter()
        .map(|&w| to_lattice(w, delta, "work value"))
        .collect::<Result<Vec<_>>>()?;

    // Dyadic rounding.
    let denom = 1u128 << denom_bits;
    let mut numerators = BTreeMap::new();
    let mut max_input_error: f64 = 0.0;
    for ((s, sp, k), p) in kernel.iter() {
        let n = (p * denom as f64).round();
        max_input_error = max_input_error.max((p - n / denom as f64).abs());
        if n > 0.0 {
            numerators.insert((s, sp, k), n as u128);
        }
    }
    for s in 0..d {
        let row: u128 = numerators.iter().filter(|((a, _, _), _)| *a == s).map(|(_, n)| n).sum();
        if row != denom {
            return Err(Error::NotDyadic(format!(
                "row {s} rounds to {row}/{denom}"
            )));
        }
    }
    for sp in 0..final_units.len() {
        let terms: Vec<(i64, u128)> = numerators
            .iter()
            .filter(|((_, t, _), _)| *t == sp)
            .map(|(&(s, _, k), &n)| (final_units[sp] - initial_units[s] + work_units[k], n))
            .collect();
        let lowest = terms.iter().map(|t| t.0).min().unwrap_or(0).min(0);
        let shift = |e: i64| -> Result<u32> {
            u32::try_from(e - lowest)
                .ok()
                .filter(|&b| b < 100)
                .ok_or_else(|| Error::Capacity("Gibbs sum exponent out of range".into()))
        };
        let mut lhs: u128 = 0;
        for (e, n) in &terms {
            let b = shift(*e)?;
            let term = n
                .checked_shl(b)
                .filter(|v| v >> b == *n)
                .ok_or_else(|| Error::Capacity("Gibbs sum overflows 128 bits".into()))?;
            lhs = lhs
                .checked_add(term)
                .ok_or_else(|| Error::Capacity("Gibbs sum overflows 128 bits".into()))?;
        }
        let rhs = denom << shift(0)?;
        if lhs != rhs {
            return Err(Error::NotDyadic(format!(
                "Gibbs sum of final level {sp} is not exactly one after rounding"
            )));
        }
    }

    // Finest denominator actually used.
    let eff_bits = numerators
        .values()
        .map(|n| denom_bits - n.trailing_zeros().min(denom_bits))
        .max()
        .unwrap_or(0);
    let j_min = eff_bits as i64 - m;
    if j_min > m {
        return Err(Error::Capacity(format!(
            "largest bath degeneracy 2^{} is below the kernel denominator 2^{eff_bits}",
            2 * m
        )));
    }

    // Source level j reached from target j' by (s, s', k).
    let source_of = |s: usize, sp: usize, k: usize, jp: i64| jp + final_units[sp] + work_units[k] - initial_units[s];

    let mut interior_targets = BTreeSet::new();
    for sp in 0..final_units.len() {
        for jp in bath.levels() {
            let ok = numerators
                .keys()
                .filter(|(_, t, _)| *t == sp)
                .all(|&(s, _, k)| (j_min..=m).contains(&source_of(s, sp, k, jp)));
            if ok {
                interior_targets.insert((sp, jp));
            }
        }
    }

    let block_len = |n: u128, j: i64| -> u128 { (n << (m + j) as u32) >> denom_bits };

    // Source offsets within each (s, j) cell, lexicographic in (s', k).
    let mut source_offsets: BTreeMap<(usize, i64, usize, usize), u128> = BTreeMap::new();
    for s in 0..d {
        for j in j_min..=m {
            let mut offset = 0u128;
            for (&(_, sp, k), &n) in numerators.range((s, 0, 0)..(s + 1, 0, 0)) {
                source_offsets.insert((s, j, sp, k), offset);
                offset += block_len(n, j);
            }
            debug_assert_eq!(offset, bath.degeneracy(j));
        }
    }

    let mut blocks = Vec::new();
    for &(sp, jp) in &interior_targets {
        let mut target_offset = 0u128;
        for (&(s, t, k), &n) in &numerators {
            if t != sp {
                continue;
            }
            let j = source_of(s, sp, k, jp);
            let len = block_len(n, j);
            blocks.push(MicroBlock {
                source_level: s,
                source_bath: j,
                source_start: source_offsets[&(s, j, sp, k)],
                len,
                target_level: sp,
                target_bath: jp,
                target_start: target_offset,
                work_units: work_units[k],
            });
            target_offset += len;
        }
        if target_offset != bath.degeneracy(jp) {
            return Err(Error::Kernel(format!(
                "target cell ({sp}, {jp}) receives {target_offset} of {} microstates",
                bath.degeneracy(jp)
            )));
        }
    }
    blocks.sort_by_key(|b| (b.source_level, b.source_bath, b.source_start));

    // Preimage counting on source cells whose every block is mapped.
    let mut per_cell: BTreeMap<(usize, i64), Vec<&MicroBlock>> = BTreeMap::new();
    for b in &blocks {
        per_cell.entry((b.source_level, b.source_bath)).or_default().push(b);
    }
    let mut induced_counts: Vec<Option<BTreeMap<(usize, i64), (u128, u32)>>> = vec![None; d];
    for ((s, j), cell) in &per_cell {
        let mapped: u128 = cell.iter().map(|b| b.len).sum();
        if mapped != bath.degeneracy(*j) {
            continue;
        }
        // Count normalized to the cell size: count / 2^(M+j).
        let mut counts: BTreeMap<(usize, i64), (u128, u32)> = BTreeMap::new();
        for b in cell {
            let w = initial_units[*s] - final_units[b.target_level] - (b.target_bath - j);
            counts.entry((b.target_level, w)).or_insert((0, (m + j) as u32)).0 += b.len;
        }
        let normalized: BTreeMap<(usize, i64), (u128, u32)> = counts
            .into_iter()
            .map(|(key, (c, bits))| (key, reduce(c, bits)))
            .collect();
        match &induced_counts[*s] {
            None => induced_counts[*s] = Some(normalized),
            Some(prev) if *prev == normalized => {}
            Some(_) => {
                return Err(Error::Kernel(format!(
                    "induced transition counts differ across bath levels for level {s}"
                )))
            }
        }
    }
    let mut induced_entries = Vec::new();
    for (s, counts) in induced_counts.iter().enumerate() {
        let counts = counts.as_ref().ok_or_else(|| {
            Error::Capacity(format!(
                "no bath level of initial level {s} is fully inside the window; increase half_range"
            ))
        })?;
        for (&(sp, w), &(c, bits)) in counts {
            let k = work_units.iter().position(|&x| x == w).ok_or_else(|| {
                Error::Kernel(format!("induced work {w} is not on the grid"))
            })?;
            induced_entries.push(((s, sp, k), c as f64 / (1u128 << bits) as f64));
        }
    }
    let grid: WorkGrid = kernel.grid().clone();
    let induced = WorkKernel::unnormalized(
        kernel.initial().clone(),
        kernel.final_spectrum().clone(),
        grid.clone(),
        induced_entries,
    )?;
    let dyadic = WorkKernel::unnormalized(
        kernel.initial().clone(),
        kernel.final_spectrum().clone(),
        grid,
        numerators.iter().map(|(&key, &n)| (key, n as f64 / denom as f64)),
    )?;

    let mapped: u128 = blocks.iter().map(|b| b.len).sum();
    let total = d as u128 * bath.size();
    let boundary_fraction = (total - mapped) as f64 / total as f64;

    Ok(PermutationRealization {
        bath: *bath,
        initial_units,
        final_units,
        work_units,
        denom_bits,
        numerators,
        blocks,
        interior_targets,
        boundary_fraction,
        induced,
        dyadic,
        max_input_error,
    })
}

/// `c / 2^bits` in lowest terms.
fn reduce(c: u128, bits: u32) -> (u128, u32) {
    if c == 0 {
        return (0, 0);
    }
    let tz = c.trailing_zeros().min(bits);
    (c >> tz, bits - tz)
}
