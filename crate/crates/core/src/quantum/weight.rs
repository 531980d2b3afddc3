//! Finite cyclic weight and energy-conserving unitaries on system, bath and weight.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::linalg::{CMatrix, DensityOperator, HermitianOperator, C64};
use crate::error::{Error, Result};
use crate::thermo::EnergySpectrum;

/// Relative tolerance for reading Bohr frequencies as ladder steps.
const STEP_TOL: f64 = 1e-9;

/// `L` positions `n * delta`; translations act cyclically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightLadder {
    pub dim: usize,
    pub delta: f64,
}

impl WeightLadder {
    pub fn new(dim: usize, delta: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Argument(format!("weight ladder needs at least 3 levels, got {dim}")));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Argument(format!("weight spacing must be positive, got {delta}")));
        }
        Ok(Self { dim, delta })
    }

    pub fn hamiltonian(&self) -> HermitianOperator {
        HermitianOperator::from_real_diag(&(0..self.dim).map(|n| n as f64 * self.delta).collect::<Vec<_>>())
    }

    /// `shift(m)|n> = |n - m mod L>`, i.e. `exp(i m delta Delta_W)`.
    pub fn shift(&self, m: i64) -> CMatrix {
        let l = self.dim as i64;
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for n in 0..l {
            out[((n - m).rem_euclid(l) as usize, n as usize)] = C64::new(1.0, 0.0);
        }
        out
    }

    pub fn mid(&self) -> usize {
        self.dim / 2
    }

    pub fn position_state(&self, n: usize) -> Result<DensityOperator> {
        if n >= self.dim {
            return Err(Error::Argument(format!("position {n} outside ladder of {}", self.dim)));
        }
        let mut psi = vec![C64::new(0.0, 0.0); self.dim];
        psi[n] = C64::new(1.0, 0.0);
        DensityOperator::pure(&psi)
    }

    /// Uniform superposition `sum_n e^{2 pi i k n / L} |n> / sqrt(L)`, an
    /// eigenvector of every shift: the maximally coherent weight state.
    pub fn momentum_state(&self, k: usize) -> Result<DensityOperator> {
        let l = self.dim as f64;
        let psi: Vec<C64> = (0..self.dim)
            .map(|n| C64::from_polar(1.0 / l.sqrt(), 2.0 * std::f64::consts::PI * (k * n) as f64 / l))
            .collect();
        DensityOperator::pure(&psi)
    }

    /// Whether `rho` vanishes outside positions `[guard, L - 1 - guard]`.
    pub fn in_guard_band(&self, rho: &DensityOperator, guard: usize) -> bool {
        (0..self.dim).all(|n| {
            let inside = n >= guard && n + guard < self.dim;
            inside || (0..self.dim).all(|m| rho.matrix()[(n, m)].norm() == 0.0)
        })
    }
}

/// `U = sum_{c', c} V_{c'c} |c'><c| (x) shift((E'_{c'} - E_c)/delta)` on
/// system (x) bath (x) weight, with `E_c = E_s + b_j` before and
/// `E'_{c'} = E'_s' + b_j'` after.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConservingUnitary {
    pub matrix: CMatrix,
    pub system_initial: EnergySpectrum,
    pub system_final: EnergySpectrum,
    pub bath: EnergySpectrum,
    pub ladder: WeightLadder,
    /// Largest `|E'_{c'} - E_c| / delta` over nonzero `V_{c'c}`.
    pub max_shift: usize,
    /// Weight steps `(E_c - E'_{c'}) / delta` by `(c', c)`.
    pub steps: Vec<Vec<i64>>,
}

impl EnergyConservingUnitary {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.system_initial.len(), self.bath.len(), self.ladder.dim)
    }
}

fn joint_energies(system: &EnergySpectrum, bath: &EnergySpectrum) -> Vec<f64> {
    system
        .levels()
        .iter()
        .flat_map(|s| bath.levels().iter().map(move |b| s.energy + b.energy))
        .collect()
}

pub fn build_energy_conserving_unitary(
    v: &CMatrix,
    system_initial: &EnergySpectrum,
    system_final: &EnergySpectrum,
    bath: &EnergySpectrum,
    ladder: &WeightLadder,
) -> Result<EnergyConservingUnitary> {
    let (ds, db) = (system_initial.len(), bath.len());
    if system_final.len() != ds {
        return Err(Error::dim("final system dimension", ds, system_final.len()));
    }
    let n = ds * db;
    if v.rows() != n || v.cols() != n {
        return Err(Error::dim("system-bath unitary", n, v.rows()));
    }
    let err = v.unitarity_error();
    if err > 1e-10 {
        return Err(Error::Operator(format!("V is not unitary (error {err:.3e})")));
    }
    let e_in = joint_energies(system_initial, bath);
    let e_out = joint_energies(system_final, bath);
    let l = ladder.dim;
    let mut steps = vec![vec![0i64; n]; n];
    let mut max_shift = 0usize;
    let mut u = CMatrix::zeros(n * l, n * l);
    for cp in 0..n {
        for c in 0..n {
            let amp = v[(cp, c)];
            if amp.norm() == 0.0 {
                continue;
            }
            let x = (e_in[c] - e_out[cp]) / ladder.delta;
            let m = x.round();
            if (x - m).abs() > STEP_TOL * (1.0 + x.abs()) {
                return Err(Error::Commensurability(format!(
                    "Bohr frequency {} is not a multiple of the weight spacing {}",
                    e_in[c] - e_out[cp],
                    ladder.delta
                )));
            }
            let m = m as i64;
            steps[cp][c] = m;
            max_shift = max_shift.max(m.unsigned_abs() as usize);
            for pos in 0..l {
                let target = (pos as i64 + m).rem_euclid(l as i64) as usize;
                u[(cp * l + target, c * l + pos)] = amp;
            }
        }
    }
    Ok(EnergyConservingUnitary {
        matrix: u,
        system_initial: system_initial.clone(),
        system_final: system_final.clone(),
        bath: bath.clone(),
        ladder: *ladder,
        max_shift,
        steps,
    })
}

/// Haar-distributed unitary: Gram-Schmidt on the columns of a complex
/// Gaussian matrix (the QR factor with positive diagonal `R`).
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let mut g = CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    for j in 0..n {
        for k in 0..j {
            let proj: C64 = (0..n).map(|i| g[(i, k)].conj() * g[(i, j)]).sum();
            for i in 0..n {
                let gik = g[(i, k)];
                g[(i, j)] -= proj * gik;
            }
        }
        let norm: f64 = (0..n).map(|i| g[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            g[(i, j)] /= norm;
        }
    }
    // A second pass removes the residual non-orthogonality of one MGS sweep.
    for j in 0..n {
        for k in 0..j {
            let proj: C64 = (0..n).map(|i| g[(i, k)].conj() * g[(i, j)]).sum();
            for i in 0..n {
                let gik = g[(i, k)];
                g[(i, j)] -= proj * gik;
            }
        }
        let norm: f64 = (0..n).map(|i| g[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            g[(i, j)] /= norm;
        }
    }
    g
}

/// `V = (1_S (x) W_B) P D`: a diagonal phase `D`, a permutation `P` of the
/// joint basis and a bath-only unitary `W_B`. Channels built from such `V`
/// map energy eigenstates of system and weight to diagonal states.
pub fn random_quasi_classical_unitary<R: Rng>(ds: usize, db: usize, rng: &mut R) -> CMatrix {
    let n = ds * db;
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut pd = CMatrix::zeros(n, n);
    for (c, &cp) in perm.iter().enumerate() {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        pd[(cp, c)] = C64::from_polar(1.0, phase);
    }
    let wb = CMatrix::identity(ds).kron(&random_unitary(db, rng));
    &wb * &pd
}
