//! Quantum fluctuation identities evaluated by direct matrix computation.

use serde::Serialize;

use super::channel::QuantumChannel;
use super::linalg::{CMatrix, DensityOperator, GibbsSuperoperator, HermitianOperator};
use super::weight::{EnergyConservingUnitary, WeightLadder};
use crate::error::{Error, Result};
use crate::fluctuation::IdentityReport;
use crate::kernel::{WorkGrid, WorkKernel};
use crate::thermo::{EnergySpectrum, ThermalContext};

/// Mixing weight of the Gibbs state used for rank-deficient system states.
pub const FULL_RANK_ETA: f64 = 1e-10;
/// Commutation tolerance for quasi-classical inputs.
const COMMUTE_TOL: f64 = 1e-10;
/// Tolerance for diagonal channel outputs on basis inputs.
pub const QUASI_CLASSICAL_TOL: f64 = 1e-10;

/// Diagonal of `H_S (x) 1 + 1 (x) H_W`.
fn system_weight_energies(spectrum: &EnergySpectrum, ladder: &WeightLadder) -> Vec<f64> {
    spectrum
        .levels()
        .iter()
        .flat_map(|lv| (0..ladder.dim).map(move |n| lv.energy + n as f64 * ladder.delta))
        .collect()
}

fn exp_diag(energies: &[f64], t: f64) -> Vec<f64> {
    energies.iter().map(|e| (t * e).exp()).collect()
}

fn check_channel(gamma: &QuantumChannel, ds: usize, ladder: &WeightLadder) -> Result<()> {
    if gamma.in_dim != ds * ladder.dim || gamma.out_dim != ds * ladder.dim {
        return Err(Error::dim("system-weight channel", ds * ladder.dim, gamma.in_dim));
    }
    Ok(())
}

/// `||tr_W[J_{H'+H_W} Gamma J^{-1}_{H+H_W} (1_S (x) rho_W)] - 1_S||_F`.
pub fn check_quantum_gibbs_stochastic(
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
    rho_w: &DensityOperator,
    ctx: &ThermalContext,
) -> Result<f64> {
    let ds = initial.len();
    check_channel(gamma, ds, ladder)?;
    let h_in = system_weight_energies(initial, ladder);
    let h_out = system_weight_energies(final_, ladder);
    let beta = ctx.beta();
    let x = CMatrix::identity(ds).kron(rho_w.matrix());
    let jm = exp_diag(&h_in, -0.5 * beta);
    let jp = exp_diag(&h_out, 0.5 * beta);
    let y = gamma.apply(&x.scale_rows_cols(&jm, &jm))?.scale_rows_cols(&jp, &jp);
    let reduced = y.partial_trace(&[ds, ladder.dim], &[true, false])?;
    Ok((&reduced - &CMatrix::identity(ds)).frobenius_norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumIdentityReport {
    pub reports: Vec<IdentityReport>,
    /// Gibbs admixture applied to a rank-deficient system state.
    pub eta: Option<f64>,
    /// Whether the classical-quantum identities were evaluated.
    pub quasi_classical: bool,
    #[serde(skip)]
    pub final_state: CMatrix,
}

struct Prepared {
    rho: CMatrix,
    eta: Option<f64>,
    h_in: Vec<f64>,
    h_out: Vec<f64>,
    /// `e^{beta H_W}` on the system (x) weight diagonal.
    weight_boltz: Vec<f64>,
    final_state: CMatrix,
}

fn prepare(
    rho_s: &DensityOperator,
    rho_w: &DensityOperator,
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
    ctx: &ThermalContext,
) -> Result<Prepared> {
    let ds = initial.len();
    check_channel(gamma, ds, ladder)?;
    if rho_s.dim() != ds {
        return Err(Error::dim("system state", ds, rho_s.dim()));
    }
    if rho_w.dim() != ladder.dim {
        return Err(Error::dim("weight state", ladder.dim, rho_w.dim()));
    }
    let (rho, eta) = if rho_s.min_eigenvalue()? <= 1e-12 {
        let gibbs = DensityOperator::from_diag(
            &initial
                .levels()
                .iter()
                .map(|l| ctx.boltzmann(l.energy) / initial.partition_function(ctx))
                .collect::<Vec<_>>(),
        )?;
        (rho_s.mix(&gibbs, FULL_RANK_ETA)?.matrix().clone(), Some(FULL_RANK_ETA))
    } else {
        (rho_s.matrix().clone(), None)
    };
    let out = gamma.apply(&rho.kron(rho_w.matrix()))?;
    let final_state = out.partial_trace(&[ds, ladder.dim], &[true, false])?;
    let weight_boltz = (0..ds)
        .flat_map(|_| (0..ladder.dim).map(|n| (ctx.beta() * n as f64 * ladder.delta).exp()))
        .collect();
    Ok(Prepared {
        rho,
        eta,
        h_in: system_weight_energies(initial, ladder),
        h_out: system_weight_energies(final_, ladder),
        weight_boltz,
        final_state,
    })
}

fn weighted_trace(m: &CMatrix, diag: &[f64]) -> f64 {
    m.diagonal().iter().zip(diag).map(|(z, d)| z.re * d).sum()
}

/// Quantum second-law equality (value 1) and quantum Jarzynski equality
/// (value `Z'_S`), plus the classical-quantum versions when both inputs
/// commute with their Hamiltonians.
#[allow(clippy::too_many_arguments)]
pub fn quantum_identities(
    rho_s: &DensityOperator,
    rho_w: &DensityOperator,
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
    ctx: &ThermalContext,
    tol: f64,
) -> Result<QuantumIdentityReport> {
    let p = prepare(rho_s, rho_w, gamma, initial, final_, ladder, ctx)?;
    let beta = ctx.beta();
    let z_final = final_.partition_function(ctx);
    let eye_w = CMatrix::identity(ladder.dim);

    // J^{-1}_{T ln rho}(rho) (x) rho_W, then J^{-1}_{H+H_W}, then Gamma.
    let rho_h = HermitianOperator::new(p.rho.clone())?;
    // Composed on the spectrum: three separate products lose ~1/lambda_min
    // digits when the Gibbs admixture is tiny.
    let x0 = rho_h.apply_fn(|x| x.powf(-0.5) * x * x.powf(-0.5))?.kron(rho_w.matrix());
    let jm = exp_diag(&p.h_in, -0.5 * beta);
    let z = gamma.apply(&x0.scale_rows_cols(&jm, &jm))?;

    let jp = exp_diag(&p.h_out, 0.5 * beta);
    let sqrt_final = HermitianOperator::new(p.final_state.clone())?.sqrt_psd()?.kron(&eye_w);
    let second = sqrt_final
        .matmul(&z.scale_rows_cols(&jp, &jp))?
        .matmul(&sqrt_final)?
        .trace()
        .re;
    let jarzynski = weighted_trace(&z, &p.weight_boltz);

    let mut reports = vec![
        IdentityReport::equality("quantum_second_law", second, 1.0, tol),
        IdentityReport::equality("quantum_jarzynski", jarzynski, z_final, tol),
    ];
    let quasi_classical = commutes(rho_s, rho_w, initial, ladder)?;
    if quasi_classical {
        reports.extend(classical_quantum_values(&p, rho_w, gamma, initial, final_, ladder, ctx, tol)?);
    }
    Ok(QuantumIdentityReport {
        reports,
        eta: p.eta,
        quasi_classical,
        final_state: p.final_state,
    })
}

fn commutes(rho_s: &DensityOperator, rho_w: &DensityOperator, initial: &EnergySpectrum, ladder: &WeightLadder) -> Result<bool> {
    let hs = CMatrix::from_real_diag(&initial.energies());
    let hw = ladder.hamiltonian();
    Ok(rho_s.matrix().commutator_norm(&hs)? <= COMMUTE_TOL && rho_w.matrix().commutator_norm(hw.matrix())? <= COMMUTE_TOL)
}

/// Classical-quantum second-law (value 1) and Jarzynski (value `Z'_S`)
/// equalities with the free-energy operators `F = H + T ln Delta[rho]`.
#[allow(clippy::too_many_arguments)]
pub fn classical_quantum_identities(
    rho_s: &DensityOperator,
    rho_w: &DensityOperator,
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
    ctx: &ThermalContext,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    if !commutes(rho_s, rho_w, initial, ladder)? {
        return Err(Error::Precondition(
            "system and weight states must commute with their Hamiltonians".into(),
        ));
    }
    let p = prepare(rho_s, rho_w, gamma, initial, final_, ladder, ctx)?;
    classical_quantum_values(&p, rho_w, gamma, initial, final_, ladder, ctx, tol)
}

#[allow(clippy::too_many_arguments)]
fn classical_quantum_values(
    p: &Prepared,
    rho_w: &DensityOperator,
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
    ctx: &ThermalContext,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let beta = ctx.beta();
    let hs = HermitianOperator::from_real_diag(&initial.energies());
    let hs_final = HermitianOperator::from_real_diag(&final_.energies());
    let hw = ladder.hamiltonian();

    // e^{-beta F/2} = e^{-beta H/2} Delta[rho]^{-1/2}; the factors commute.
    // rho commutes with H, so Delta[rho] = rho and the sandwich is composed on
    // the spectrum, as in the quantum path.
    let deph = HermitianOperator::new(hs.dephase(&p.rho)?)?;
    let x_s = deph.apply_fn(|x| x.powf(-0.5) * x * x.powf(-0.5))?;
    let f_inv = hs.exp_scaled(-0.5 * beta)?.kron(&hw.exp_scaled(-0.5 * beta)?);
    let x = GibbsSuperoperator::from_factor(f_inv, true).apply(&x_s.kron(rho_w.matrix()))?;
    let z = gamma.apply(&x)?;

    let deph_final = HermitianOperator::new(hs_final.dephase(&p.final_state)?)?;
    let f_out = hs_final.exp_scaled(0.5 * beta)?.matmul(&deph_final.sqrt_psd()?)?;
    let f_out = HermitianOperator::new(f_out)?.matrix().kron(&hw.exp_scaled(0.5 * beta)?);
    let second = GibbsSuperoperator::from_factor(f_out, false).apply(&z)?.trace().re;
    let jarzynski = weighted_trace(&z, &p.weight_boltz);
    Ok(vec![
        IdentityReport::equality("classical_quantum_second_law", second, 1.0, tol),
        IdentityReport::equality("classical_quantum_jarzynski", jarzynski, final_.partition_function(ctx), tol),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumCrooksReport {
    /// Largest `||J' Gamma J^{-1}(X) - Theta*(X)||_F` over guard-band matrix units.
    pub distance: f64,
    pub inputs: usize,
    pub guard: usize,
}

/// Compares `J_{H'+H_W} Gamma J^{-1}_{H+H_W}` with the dual of the backward
/// channel on every matrix unit `|s,n><t,m|` with `n, m` at least
/// `max_shift` steps from both ladder ends.
pub fn quantum_crooks_check(
    u: &EnergyConservingUnitary,
    gamma: &QuantumChannel,
    theta: &QuantumChannel,
    ctx: &ThermalContext,
) -> Result<QuantumCrooksReport> {
    let (ds, _, l) = u.dims();
    check_channel(gamma, ds, &u.ladder)?;
    check_channel(theta, ds, &u.ladder)?;
    let g = u.max_shift;
    if 2 * g >= l {
        return Err(Error::Precondition(format!("ladder of {l} has no guard band for shifts of {g}")));
    }
    let beta = ctx.beta();
    let h_in = system_weight_energies(&u.system_initial, &u.ladder);
    let h_out = system_weight_energies(&u.system_final, &u.ladder);
    let jm = exp_diag(&h_in, -0.5 * beta);
    let jp = exp_diag(&h_out, 0.5 * beta);
    let band: Vec<usize> = (0..ds).flat_map(|s| (g..l - g).map(move |n| s * l + n)).collect();
    let mut distance: f64 = 0.0;
    for &a in &band {
        for &b in &band {
            let lhs = gamma.apply_unit(a, b).scale_rows_cols(&jp, &jp).scale_real(jm[a] * jm[b]);
            let rhs = theta.apply_dual_unit(a, b);
            distance = distance.max((&lhs - &rhs).frobenius_norm());
        }
    }
    Ok(QuantumCrooksReport {
        distance,
        inputs: band.len() * band.len(),
        guard: g,
    })
}

/// `P(s', w | s) = <s', x0 + w/delta| Gamma(|s><s| (x) |x0><x0|) |s', x0 + w/delta>`
/// with `x0` the middle of the ladder.
pub fn induced_classical_kernel(
    gamma: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    ladder: &WeightLadder,
) -> Result<WorkKernel> {
    let ds = initial.len();
    check_channel(gamma, ds, ladder)?;
    let l = ladder.dim;
    let x0 = ladder.mid();
    let mut raw = Vec::new();
    for s in 0..ds {
        let out = gamma.apply_unit(s * l + x0, s * l + x0);
        let leakage = out.off_diagonal_max();
        if leakage > QUASI_CLASSICAL_TOL {
            return Err(Error::NotQuasiClassical { leakage });
        }
        for sp in 0..final_.len() {
            for n in 0..l {
                let prob = out[(sp * l + n, sp * l + n)].re;
                if prob > 0.0 {
                    raw.push((s, sp, n as i64 - x0 as i64, prob));
                }
            }
        }
    }
    let mut steps: Vec<i64> = raw.iter().map(|r| r.2).collect();
    steps.sort_unstable();
    steps.dedup();
    let grid = WorkGrid::new(steps.iter().map(|&k| k as f64 * ladder.delta).collect())?;
    let entries = raw
        .into_iter()
        .map(|(s, sp, k, p)| ((s, sp, steps.binary_search(&k).unwrap()), p))
        .collect::<Vec<_>>();
    WorkKernel::with_row_tolerance(initial.clone(), final_.clone(), grid, entries, 1e-10)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpmReport {
    /// `matrix[c][c'] = P(c' | c)` over the joint system-bath basis.
    pub matrix: Vec<Vec<f64>>,
    pub max_row_deviation: f64,
    pub max_column_deviation: f64,
    /// `<e^{beta w}>` with `w = E_c - E'_{c'}` for thermal system and bath,
    /// against `Z'_S / Z_S`.
    pub jarzynski: IdentityReport,
}

/// Two-point measurement statistics of a system-bath channel, resolved on
/// the product energy basis.
pub fn tpm_check(
    gamma_sb: &QuantumChannel,
    initial: &EnergySpectrum,
    final_: &EnergySpectrum,
    bath: &EnergySpectrum,
    ctx: &ThermalContext,
    tol: f64,
) -> Result<TpmReport> {
    let (ds, db) = (initial.len(), bath.len());
    let n = ds * db;
    if gamma_sb.in_dim != n || gamma_sb.out_dim != n {
        return Err(Error::dim("system-bath channel", n, gamma_sb.in_dim));
    }
    let joint = |sp: &EnergySpectrum, c: usize| sp.energy(c / db) + bath.energy(c % db);
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let out = gamma_sb.apply_unit(c, c);
            (0..n).map(|cp| out[(cp, cp)].re).collect()
        })
        .collect();
    let max_row_deviation = matrix.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let max_column_deviation = (0..n)
        .map(|cp| (matrix.iter().map(|r| r[cp]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let (z, z_final, z_bath) = (
        initial.partition_function(ctx),
        final_.partition_function(ctx),
        bath.partition_function(ctx),
    );
    let beta = ctx.beta();
    let mut value = 0.0;
    for (c, row) in matrix.iter().enumerate() {
        let e = joint(initial, c);
        let weight = ctx.boltzmann(e) / (z * z_bath);
        for (cp, &p) in row.iter().enumerate() {
            value += weight * p * (beta * (e - joint(final_, cp))).exp();
        }
    }
    Ok(TpmReport {
        matrix,
        max_row_deviation,
        max_column_deviation,
        jarzynski: IdentityReport::equality("tpm_jarzynski", value, z_final / z, tol),
    })
}

/// `||Gamma(1) - 1||_F`.
pub fn unitality_error(gamma: &QuantumChannel) -> Result<f64> {
    let out = gamma.apply(&CMatrix::identity(gamma.in_dim))?;
    Ok((&out - &CMatrix::identity(gamma.out_dim)).frobenius_norm())
}
