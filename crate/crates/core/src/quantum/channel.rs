//! Kraus-form channels induced by energy-conserving unitaries.

use super::linalg::{CMatrix, DensityOperator, C64};
use super::weight::EnergyConservingUnitary;
use crate::error::{Error, Result};
use crate::thermo::ThermalContext;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    pub kraus: Vec<CMatrix>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl QuantumChannel {
    /// Validates `sum K^dag K = 1` within `1e-10`.
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::Operator("channel needs a Kraus operator".into()))?;
        let (out_dim, in_dim) = (first.rows(), first.cols());
        if kraus.iter().any(|k| k.rows() != out_dim || k.cols() != in_dim) {
            return Err(Error::Operator("Kraus operators differ in shape".into()));
        }
        let ch = Self { kraus, in_dim, out_dim };
        let err = ch.trace_preservation_error();
        if err > 1e-10 {
            return Err(Error::Operator(format!("channel is not trace preserving (error {err:.3e})")));
        }
        Ok(ch)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![CMatrix::identity(dim)],
            in_dim: dim,
            out_dim: dim,
        }
    }

    /// `||sum K^dag K - 1||_F`.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut s = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            s = &s + &(&k.adjoint() * k);
        }
        (&s - &CMatrix::identity(self.in_dim)).frobenius_norm()
    }

    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.rows() != self.in_dim || rho.cols() != self.in_dim {
            return Err(Error::dim("channel input", self.in_dim, rho.rows()));
        }
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out = &out + &k.matmul(rho)?.matmul(&k.adjoint())?;
        }
        Ok(out)
    }

    /// Dual map `X -> sum K^dag X K`.
    pub fn apply_dual(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.rows() != self.out_dim || x.cols() != self.out_dim {
            return Err(Error::dim("dual channel input", self.out_dim, x.rows()));
        }
        let mut out = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            out = &out + &k.adjoint().matmul(x)?.matmul(k)?;
        }
        Ok(out)
    }

    /// Image of the matrix unit `|a><b|`: `sum_k K|a><b|K^dag`.
    pub fn apply_unit(&self, a: usize, b: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            for r in 0..self.out_dim {
                let kra = k[(r, a)];
                if kra == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..self.out_dim {
                    out[(r, c)] += kra * k[(c, b)].conj();
                }
            }
        }
        out
    }

    /// Dual image of `|a><b|`: `sum_k K^dag|a><b|K`.
    pub fn apply_dual_unit(&self, a: usize, b: usize) -> CMatrix {
        let mut out = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            for r in 0..self.in_dim {
                let kar = k[(a, r)].conj();
                if kar == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..self.in_dim {
                    out[(r, c)] += kar * k[(b, c)];
                }
            }
        }
        out
    }
}

fn bath_weights(u: &EnergyConservingUnitary, ctx: &ThermalContext) -> Vec<f64> {
    let z = u.bath.partition_function(ctx);
    u.bath.levels().iter().map(|l| ctx.boltzmann(l.energy) / z).collect()
}

/// Kraus operators `sqrt(g_j) <j'|M|j>` of `rho -> tr_B[M (rho (x) gamma_B) M^dag]`
/// on system (x) weight.
fn bath_kraus(m: &CMatrix, dims: (usize, usize, usize), g: &[f64]) -> Vec<CMatrix> {
    let (ds, db, l) = dims;
    let idx = |s: usize, j: usize, n: usize| (s * db + j) * l + n;
    let mut out = Vec::new();
    for (j, &gj) in g.iter().enumerate() {
        if gj == 0.0 {
            continue;
        }
        let amp = gj.sqrt();
        for jp in 0..db {
            let k = CMatrix::from_fn(ds * l, ds * l, |r, c| m[(idx(r / l, jp, r % l), idx(c / l, j, c % l))] * amp);
            if k.max_abs() > 0.0 {
                out.push(k);
            }
        }
    }
    out
}

/// Forward `Gamma(rho) = tr_B[U (rho (x) gamma_B) U^dag]` and backward
/// `Theta(rho) = tr_B[U^dag (rho (x) gamma_B) U]` on system (x) weight.
pub fn channels_from_unitary(u: &EnergyConservingUnitary, ctx: &ThermalContext) -> Result<(QuantumChannel, QuantumChannel)> {
    let g = bath_weights(u, ctx);
    let dims = u.dims();
    let forward = QuantumChannel::new(bath_kraus(&u.matrix, dims, &g))?;
    let backward = QuantumChannel::new(bath_kraus(&u.matrix.adjoint(), dims, &g))?;
    Ok((forward, backward))
}

/// `tr_B[(gamma_B) U (X (x) 1_B) U^dag]`, the closed form of the dual of the
/// backward channel.
pub fn backward_dual_closed_form(u: &EnergyConservingUnitary, ctx: &ThermalContext, x: &CMatrix) -> Result<CMatrix> {
    let (ds, db, l) = u.dims();
    if x.rows() != ds * l {
        return Err(Error::dim("system-weight operator", ds * l, x.rows()));
    }
    let g = bath_weights(u, ctx);
    let n = ds * db * l;
    let split = |i: usize| (i / (db * l), (i / l) % db, i % l);
    let lifted = CMatrix::from_fn(n, n, |r, c| {
        let (s, j, p) = split(r);
        let (t, k, q) = split(c);
        if j == k {
            x[(s * l + p, t * l + q)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let y = u.matrix.matmul(&lifted)?.matmul(&u.matrix.adjoint())?;
    let weighted = CMatrix::from_fn(n, n, |r, c| y[(r, c)] * g[split(r).1]);
    weighted.partial_trace(&[ds, db, l], &[true, false, true])
}

/// `rho_SB -> tr_W[U (rho_SB (x) rho_W) U^dag]`.
pub fn system_bath_channel(u: &EnergyConservingUnitary, rho_w: &DensityOperator) -> Result<QuantumChannel> {
    let (ds, db, l) = u.dims();
    if rho_w.dim() != l {
        return Err(Error::dim("weight state", l, rho_w.dim()));
    }
    let n = ds * db;
    // Pure weight states need no eigendecomposition.
    let components: Vec<(f64, Vec<C64>)> = if (rho_w.purity() - 1.0).abs() < 1e-12 {
        let m = rho_w.matrix();
        let col = (0..l).max_by(|&a, &b| m[(a, a)].re.total_cmp(&m[(b, b)].re)).unwrap();
        let norm = m[(col, col)].re.sqrt();
        vec![(1.0, (0..l).map(|r| m[(r, col)] / norm).collect())]
    } else {
        let e = rho_w.as_hermitian().eig()?;
        e.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1e-15)
            .map(|(k, &v)| (v, (0..l).map(|r| e.vectors[(r, k)]).collect()))
            .collect()
    };
    let mut kraus = Vec::new();
    for (lambda, phi) in components {
        let amp = lambda.sqrt();
        for pos in 0..l {
            let k = CMatrix::from_fn(n, n, |cp, c| {
                (0..l).map(|m| u.matrix[(cp * l + pos, c * l + m)] * phi[m]).sum::<C64>() * amp
            });
            if k.max_abs() > 0.0 {
                kraus.push(k);
            }
        }
    }
    QuantumChannel::new(kraus)
}
