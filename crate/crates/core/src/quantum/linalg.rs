//! Dense complex matrices, a Jacobi eigensolver, and Hermitian functional calculus.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::thermo::ThermalContext;

pub type C64 = Complex64;

pub(crate) const HERMITIAN_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Row-major entries.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix entries", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Largest modulus of an off-diagonal entry.
    pub fn off_diagonal_max(&self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if r != c {
                    m = m.max(self[(r, c)].norm());
                }
            }
        }
        m
    }

    pub fn is_diagonal(&self) -> bool {
        self.off_diagonal_max() == 0.0
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| self[(r / r2, c / c2)] * other[(r % r2, c % c2)])
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("matrix product", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn commutator_norm(&self, other: &CMatrix) -> Result<f64> {
        Ok((&self.matmul(other)? - &other.matmul(self)?).frobenius_norm())
    }

    /// Multiplies entry `(r, c)` by `left[r] * right[c]`.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] * (left[r] * right[c]))
    }

    /// Partial trace over the subsystems whose `keep` flag is false.
    pub fn partial_trace(&self, dims: &[usize], keep: &[bool]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if !self.is_square() || self.rows != total || keep.len() != dims.len() {
            return Err(Error::dim("partial trace", total, self.rows));
        }
        let kept: Vec<usize> = (0..dims.len()).filter(|&i| keep[i]).collect();
        let out_dim: usize = kept.iter().map(|&i| dims[i]).product();
        let mut out = Self::zeros(out_dim, out_dim);
        let split = |mut idx: usize| -> Vec<usize> {
            let mut digits = vec![0; dims.len()];
            for i in (0..dims.len()).rev() {
                digits[i] = idx % dims[i];
                idx /= dims[i];
            }
            digits
        };
        let kept_index = |digits: &[usize]| kept.iter().fold(0, |acc, &i| acc * dims[i] + digits[i]);
        for r in 0..total {
            let dr = split(r);
            for c in 0..total {
                let dc = split(c);
                if (0..dims.len()).all(|i| keep[i] || dr[i] == dc[i]) {
                    out[(kept_index(&dr), kept_index(&dc))] += self[(r, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut m: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                m = m.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        m
    }

    /// `||U^dag U - 1||_F`.
    pub fn unitarity_error(&self) -> f64 {
        match self.adjoint().matmul(self) {
            Ok(p) => (&p - &CMatrix::identity(self.cols)).frobenius_norm(),
            Err(_) => f64::INFINITY,
        }
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, o: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "matrix sum shape");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, o: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "matrix difference shape");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, o: &CMatrix) -> CMatrix {
        self.matmul(o).expect("matrix product shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: CMatrix,
}

/// Cyclic Jacobi rotations for a Hermitian matrix.
fn jacobi(h: &CMatrix) -> Result<Eigen> {
    let n = h.rows;
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);
    let scale = h.frobenius_norm().max(f64::MIN_POSITIVE);
    let off = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                s += a[(p, q)].norm_sqr();
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > 1e-15 * scale {
        sweeps += 1;
        if sweeps > JACOBI_MAX_SWEEPS {
            return Err(Error::Convergence {
                iterations: JACOBI_MAX_SWEEPS,
                residual: off(&a) / scale,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let e = apq / r;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = if tau >= 0.0 { 1.0 } else { -1.0 } / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let qpp = C64::new(c, 0.0);
                let qpq = C64::new(s, 0.0);
                let qqp = -e.conj() * s;
                let qqq = e.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * qpp + akq * qqp;
                    a[(k, q)] = akp * qpq + akq * qqq;
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * qpp + vkq * qqp;
                    v[(k, q)] = vkp * qpq + vkq * qqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = qpp.conj() * apk + qqp.conj() * aqk;
                    a[(q, k)] = qpq.conj() * apk + qqq.conj() * aqk;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        // Phase: largest-magnitude component real and positive (first on ties).
        let mut best = 0;
        for k in 0..n {
            if v[(k, i)].norm() > v[(best, i)].norm() * (1.0 + 1e-12) {
                best = k;
            }
        }
        let ph = v[(best, i)];
        let ph = if ph.norm() > 0.0 { ph.conj() / ph.norm() } else { C64::new(1.0, 0.0) };
        for k in 0..n {
            vectors[(k, col)] = v[(k, i)] * ph;
        }
    }
    Ok(Eigen { values, vectors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Validates conjugate symmetry within `1e-12` and symmetrizes.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let deviation = matrix.hermitian_deviation();
        if !(deviation <= HERMITIAN_TOL * (1.0 + matrix.max_abs())) {
            return Err(Error::NotHermitian { deviation });
        }
        let sym = (&matrix + &matrix.adjoint()).scale_real(0.5);
        Ok(Self { matrix: sym })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self {
            matrix: CMatrix::from_real_diag(diag),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn eig(&self) -> Result<Eigen> {
        jacobi(&self.matrix)
    }

    /// `f(H)` through the eigenbasis; exact for diagonal matrices.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
        if self.matrix.is_diagonal() {
            let d: Vec<f64> = self.matrix.diagonal().iter().map(|z| f(z.re)).collect();
            return Ok(CMatrix::from_real_diag(&d));
        }
        let e = self.eig()?;
        let n = self.dim();
        let fv: Vec<f64> = e.values.iter().map(|&x| f(x)).collect();
        let vd = CMatrix::from_fn(n, n, |r, c| e.vectors[(r, c)] * fv[c]);
        vd.matmul(&e.vectors.adjoint())
    }

    /// `exp(t H)`.
    pub fn exp_scaled(&self, t: f64) -> Result<CMatrix> {
        self.apply_fn(|x| (t * x).exp())
    }

    /// Square root with eigenvalues in `[-1e-10, 0)` clamped to zero.
    pub fn sqrt_psd(&self) -> Result<CMatrix> {
        self.apply_fn(|x| x.max(0.0).sqrt())
    }

    /// `ln H` on the support (eigenvalues above `floor`). Kernel eigenvalues
    /// map to `ln eta` when a regularizer is given and to 0 otherwise.
    pub fn ln_on_support(&self, floor: f64, eta: Option<f64>) -> Result<CMatrix> {
        self.apply_fn(|x| if x > floor { x.ln() } else { eta.map_or(0.0, f64::ln) })
    }

    /// Pinching onto eigenspaces of `self` (eigenvalues within `1e-10` grouped).
    pub fn dephase(&self, rho: &CMatrix) -> Result<CMatrix> {
        let n = self.dim();
        let (values, vectors) = if self.matrix.is_diagonal() {
            let v: Vec<f64> = self.matrix.diagonal().iter().map(|z| z.re).collect();
            (v, CMatrix::identity(n))
        } else {
            let e = self.eig()?;
            (e.values, e.vectors)
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            match groups.last_mut() {
                Some(g) if (values[i] - values[g[g.len() - 1]]).abs() <= 1e-10 => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        let mut out = CMatrix::zeros(n, n);
        for g in groups {
            let p = CMatrix::from_fn(n, n, |r, c| g.iter().map(|&k| vectors[(r, k)] * vectors[(c, k)].conj()).sum());
            out = &out + &p.matmul(rho)?.matmul(&p)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Hermitian, PSD (min eigenvalue >= -1e-10), unit trace within 1e-10.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let h = HermitianOperator::new(matrix)?;
        let tr = h.matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Operator(format!("density operator has trace {tr}")));
        }
        let min = if h.matrix.is_diagonal() {
            h.matrix.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
        } else {
            *h.eig()?.values.last().unwrap()
        };
        if min < -1e-10 {
            return Err(Error::Operator(format!("density operator has eigenvalue {min}")));
        }
        Ok(Self { matrix: h.matrix })
    }

    pub fn from_diag(probs: &[f64]) -> Result<Self> {
        Self::new(CMatrix::from_real_diag(probs))
    }

    /// `|psi><psi|` for a normalized vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Operator(format!("state vector has norm^2 {norm}")));
        }
        Self::new(CMatrix::from_fn(psi.len(), psi.len(), |r, c| psi[r] * psi[c].conj()))
    }


    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*HermitianOperator { matrix: self.matrix.clone() }.eig()?.values.last().unwrap())
    }

    pub fn as_hermitian(&self) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix.clone(),
        }
    }

    /// `(1 - eta) self + eta other`.
    pub fn mix(&self, other: &DensityOperator, eta: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::dim("density mixture", self.dim(), other.dim()));
        }
        Ok(Self {
            matrix: &self.matrix.scale_real(1.0 - eta) + &other.matrix.scale_real(eta),
        })
    }

    /// `e^{-beta H} / Z`.
    pub fn gibbs(h: &HermitianOperator, ctx: &ThermalContext) -> Result<Self> {
        let m = h.exp_scaled(-ctx.beta())?;
        let z = m.trace().re;
        Ok(Self { matrix: m.scale_real(1.0 / z) })
    }
}

/// `J_H(X) = e^{beta H/2} X e^{beta H/2}`, or its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSuperoperator {
    factor: CMatrix,
    diag: Option<Vec<f64>>,
    pub inverse: bool,
}

impl GibbsSuperoperator {
    pub fn new(h: &HermitianOperator, ctx: &ThermalContext, inverse: bool) -> Result<Self> {
        let t = if inverse { -0.5 } else { 0.5 } * ctx.beta();
        let factor = h.exp_scaled(t)?;
        let diag = factor
            .is_diagonal()
            .then(|| factor.diagonal().iter().map(|z| z.re).collect());
        Ok(Self { factor, diag, inverse })
    }

    /// Conjugation by an explicit Hermitian factor `M`: `X -> M X M`.
    pub fn from_factor(factor: CMatrix, inverse: bool) -> Self {
        let diag = (factor.is_diagonal() && factor.diagonal().iter().all(|z| z.im == 0.0))
            .then(|| factor.diagonal().iter().map(|z| z.re).collect());
        Self { factor, diag, inverse }
    }

    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        match &self.diag {
            Some(d) => {
                if x.rows != d.len() || x.cols != d.len() {
                    return Err(Error::dim("J superoperator input", d.len(), x.rows));
                }
                Ok(x.scale_rows_cols(d, d))
            }
            None => self.factor.matmul(x)?.matmul(&self.factor),
        }
    }
}
