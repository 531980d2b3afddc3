//! Seeded generators of valid kernels for property testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{WorkGrid, WorkKernel};
use crate::error::{Error, Result};
use crate::thermo::{EnergySpectrum, ThermalContext};

pub const IPF_TOL: f64 = 1e-13;
pub const IPF_MAX_SWEEPS: usize = 100_000;

/// Strictly positive kernel satisfying row normalization and the
/// Gibbs-stochastic condition, found by iterative proportional fitting.
///
/// Each sweep rescales rows to one, rescales the weighted columns to one,
/// and applies an exponential tilt `exp(theta w)` fixing the aggregate
/// ratio `sum e^{-beta E_s} P e^{beta w} / sum e^{-beta E_s} P = Z'/Z`. The
/// tilt supplies the one degree of freedom that row and column scalings
/// alone lack. Errors when the grid cannot bracket `T ln(Z'/Z)` or the
/// iteration stalls.
pub fn random_kernel(
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    grid: &WorkGrid,
    ctx: &ThermalContext,
    seed: u64,
) -> Result<WorkKernel> {
    let (d, dp, n) = (initial.len(), final_.len(), grid.len());
    let beta = ctx.beta();
    let idx = |s: usize, sp: usize, k: usize| (s * dp + sp) * n + k;

    let target_ratio = final_.partition_function(ctx) / initial.partition_function(ctx);
    let (w_min, w_max) = (grid.value(0), grid.value(n - 1));
    let target_log = target_ratio.ln();
    let bracket_tol = 1e-12;
    if target_log < beta * w_min - bracket_tol || target_log > beta * w_max + bracket_tol {
        return Err(Error::Argument(format!(
            "work grid [{w_min}, {w_max}] cannot satisfy the Gibbs-stochastic condition (needs T ln(Z'/Z) = {})",
            target_log / beta
        )));
    }
    let degenerate = n == 1 || (target_log - beta * w_min).abs() <= bracket_tol || (target_log - beta * w_max).abs() <= bracket_tol;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<f64> = (0..d * dp * n).map(|_| 1.0 - rng.random::<f64>()).collect();
    if degenerate {
        // All mass on the single admissible work value.
        let k_keep = if (target_log - beta * w_min).abs() <= bracket_tol { 0 } else { n - 1 };
        for s in 0..d {
            for sp in 0..dp {
                for k in 0..n {
                    if k != k_keep {
                        p[idx(s, sp, k)] = 0.0;
                    }
                }
            }
        }
    }
    let factor: Vec<f64> = (0..d * dp * n)
        .map(|i| {
            let (s, sp, k) = (i / (dp * n), (i / n) % dp, i % n);
            (beta * ((final_.energy(sp) - initial.energy(s)) + grid.value(k))).exp()
        })
        .collect();
    let boltz: Vec<f64> = (0..d).map(|s| ctx.boltzmann(initial.energy(s))).collect();
    let exp_bw: Vec<f64> = grid.values().iter().map(|w| (beta * w).exp()).collect();

    let residuals = |p: &[f64]| -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..d {
            let r: f64 = (0..dp * n).map(|j| p[s * dp * n + j]).sum();
            worst = worst.max((r - 1.0).abs());
        }
        for sp in 0..dp {
            let mut c = 0.0;
            for s in 0..d {
                for k in 0..n {
                    c += p[idx(s, sp, k)] * factor[idx(s, sp, k)];
                }
            }
            worst = worst.max((c - 1.0).abs());
        }
        worst
    };

    let mut residual = f64::INFINITY;
    for sweep in 0..IPF_MAX_SWEEPS {
        if !degenerate {
            // Tilt: aggregate weight per grid value.
            let mut a = vec![0.0; n];
            for s in 0..d {
                for sp in 0..dp {
                    for k in 0..n {
                        a[k] += boltz[s] * p[idx(s, sp, k)];
                    }
                }
            }
            let theta = solve_tilt(&a, grid.values(), &exp_bw, target_ratio);
            let shift = grid.values().iter().map(|w| theta * w).fold(f64::NEG_INFINITY, f64::max);
            let tilt: Vec<f64> = grid.values().iter().map(|w| (theta * w - shift).exp()).collect();
            for (i, v) in p.iter_mut().enumerate() {
                *v *= tilt[i % n];
            }
        }
        for s in 0..d {
            let row = &mut p[s * dp * n..(s + 1) * dp * n];
            let r: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= r);
        }
        for sp in 0..dp {
            let mut c = 0.0;
            for s in 0..d {
                for k in 0..n {
                    c += p[idx(s, sp, k)] * factor[idx(s, sp, k)];
                }
            }
            for s in 0..d {
                for k in 0..n {
                    p[idx(s, sp, k)] /= c;
                }
            }
        }
        if sweep % 4 == 3 || sweep + 1 == IPF_MAX_SWEEPS {
            residual = residuals(&p);
            if residual < IPF_TOL {
                break;
            }
        }
    }
    if !(residual < IPF_TOL) {
        return Err(Error::Convergence {
            iterations: IPF_MAX_SWEEPS,
            residual,
        });
    }
    let entries = (0..d * dp * n)
        .map(|i| ((i / (dp * n), (i / n) % dp, i % n), p[i]))
        .collect::<Vec<_>>();
    WorkKernel::new(initial.clone(), final_.clone(), grid.clone(), entries)
}

/// Finds `theta` with `sum a_k e^{(theta+beta) w_k} / sum a_k e^{theta w_k} = target`.
fn solve_tilt(a: &[f64], w: &[f64], exp_bw: &[f64], target: f64) -> f64 {
    let log_ratio = |theta: f64| -> f64 {
        let shift = w.iter().map(|x| theta * x).fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..a.len() {
            let e = a[k] * (theta * w[k] - shift).exp();
            num += e * exp_bw[k];
            den += e;
        }
        (num / den).ln()
    };
    let goal = target.ln();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while log_ratio(lo) > goal && lo > -1e6 {
        lo *= 2.0;
    }
    while log_ratio(hi) < goal && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_ratio(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exactly Gibbs-stochastic kernel whose entries are multiples of `2^-denom_bits`.
///
/// Requires `beta * delta = ln 2`, so that Boltzmann ratios between lattice
/// energies are powers of two. Energies are given in units of `delta`. The
/// kernel is a dyadic mixture of energy-shifting permutations (work
/// `E_s - E'_s'`), where part of each transition's weight is split over
/// work offsets `+2, 0, -1` (in units of `delta`) with weights `1/8, 1/8, 3/4`;
/// that split leaves every Gibbs sum unchanged.
pub fn random_dyadic_kernel(
    initial_units: &[i64],
    final_units: &[i64],
    delta: f64,
    ctx: &ThermalContext,
    denom_bits: u32,
    seed: u64,
) -> Result<WorkKernel> {
    let d = initial_units.len();
    if d == 0 || final_units.len() != d {
        return Err(Error::dim("dyadic kernel levels", d, final_units.len()));
    }
    if !(3..=40).contains(&denom_bits) {
        return Err(Error::Argument("denom_bits must lie in 3..=40".into()));
    }
    if (ctx.beta() * delta - std::f64::consts::LN_2).abs() > 1e-12 {
        return Err(Error::Argument("random dyadic kernels need beta * delta = ln 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units: u64 = 1 << denom_bits;
    let blocks = units / 8;
    let m = rng.random_range(1..=3u64).min(blocks) as usize;

    // Random composition of `blocks` into m positive parts.
    let mut cuts: Vec<u64> = Vec::new();
    while cuts.len() + 1 < m {
        let c = rng.random_range(1..blocks);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(m);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(blocks)) {
        parts.push((c - prev) * 8);
        prev = c;
    }

    let mut counts = vec![vec![0u64; d]; d];
    for part in parts {
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (s, &sp) in perm.iter().enumerate() {
            counts[s][sp] += part;
        }
    }

    let mut raw: Vec<((usize, usize, i64), u64)> = Vec::new();
    for s in 0..d {
        for sp in 0..d {
            let n = counts[s][sp];
            if n == 0 {
                continue;
            }
            let base = initial_units[s] - final_units[sp];
            let f = 8 * rng.random_range(0..=n / 8);
            raw.push(((s, sp, base), n - f + f / 8));
            if f > 0 {
                raw.push(((s, sp, base + 2), f / 8));
                raw.push(((s, sp, base - 1), 6 * f / 8));
            }
        }
    }
    let mut ks: Vec<i64> = raw.iter().map(|((_, _, k), _)| *k).collect();
    ks.sort_unstable();
    ks.dedup();
    let grid = WorkGrid::new(ks.iter().map(|&k| k as f64 * delta).collect())?;
    let scale = 1.0 / units as f64;
    let entries = raw
        .into_iter()
        .map(|((s, sp, k), n)| {
            let ki = ks.binary_search(&k).expect("k collected above");
            ((s, sp, ki), n as f64 * scale)
        })
        .collect::<Vec<_>>();
    let initial = EnergySpectrum::from_energies(
        &initial_units.iter().map(|&e| e as f64 * delta).collect::<Vec<_>>(),
    )?;
    let final_ = EnergySpectrum::from_energies(
        &final_units.iter().map(|&e| e as f64 * delta).collect::<Vec<_>>(),
    )?;
    // Entries sharing a key (possible when offsets collide) are merged.
    let mut merged: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
    for (key, p) in entries {
        *merged.entry(key).or_default() += p;
    }
    WorkKernel::new(initial, final_, grid, merged)
}
