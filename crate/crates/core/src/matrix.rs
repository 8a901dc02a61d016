//! Dense complex matrices of dimension `2^n`.
//!
//! Basis-state indices use qubit 0 as the most significant bit: for an
//! `n`-qubit register, qubit `q` occupies bit `n - 1 - q` of the index.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::Shape(format!(
            "matrix dimension must be 2^n with n >= 1, got {dim}"
        )));
    }
    Ok(())
}

impl ComplexMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(
            dim >= 2 && dim.is_power_of_two(),
            "dimension must be a power of two"
        );
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(Error::Shape(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from separate real and imaginary row lists.
    pub fn from_parts(real: &[Vec<f64>], imag: &[Vec<f64>]) -> Result<Self> {
        let dim = real.len();
        check_dim(dim)?;
        if imag.len() != dim {
            return Err(Error::Shape("real and imaginary parts differ in row count".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (re_row, im_row) in real.iter().zip(imag) {
            if re_row.len() != dim || im_row.len() != dim {
                return Err(Error::Shape(format!("every row must have {dim} entries")));
            }
            data.extend(
                re_row
                    .iter()
                    .zip(im_row)
                    .map(|(&re, &im)| Complex64::new(re, im)),
            );
        }
        Ok(Self { dim, data })
    }

    pub fn real_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.iter().map(|z| z.re).collect()).collect()
    }

    pub fn imag_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.iter().map(|z| z.im).collect()).collect()
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = z;
        }
        m
    }

    /// Permutation matrix sending basis state `i` to `perm(i)`.
    pub fn from_permutation(dim: usize, perm: impl Fn(usize) -> usize) -> Self {
        let mut m = Self::zeros(dim);
        for col in 0..dim {
            let row = perm(col);
            m.data[row * dim + col] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            let out_row = &mut out[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * d..(k + 1) * d];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: d, data: out }
    }

    /// `self · other†` without materializing the adjoint.
    pub fn mul_adjoint(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            let a_row = &self.data[i * d..(i + 1) * d];
            for j in 0..d {
                let b_row = &other.data[j * d..(j + 1) * d];
                out[i * d + j] = a_row
                    .iter()
                    .zip(b_row)
                    .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj());
            }
        }
        Self { dim: d, data: out }
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Hilbert-Schmidt inner product `Tr(self† · other)`.
    pub fn hs_inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim, other.dim);
        let d = a * b;
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..a {
            for j in 0..a {
                let x = self.data[i * a + j];
                for k in 0..b {
                    for l in 0..b {
                        out[(i * b + k) * d + j * b + l] = x * other.data[k * b + l];
                    }
                }
            }
        }
        Self { dim: d, data: out }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && self.max_abs_diff(other) <= tol
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.approx_eq(&Self::identity(self.dim), tol)
    }

    pub fn unitarity_error(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// True when `self = e^{iφ}·other` for some phase, within `tol` on `|Tr(self†other)|/dim`.
    pub fn equal_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && (self.hs_inner(other).norm() / self.dim as f64 - 1.0).abs() <= tol
    }

    /// Copy with the global phase fixed so the first largest-magnitude entry
    /// is real and positive.
    pub fn phase_canonical(&self) -> Self {
        let max = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = self
            .data
            .iter()
            .find(|z| z.norm() >= max - 1e-9)
            .copied()
            .unwrap_or(Complex64::new(1.0, 0.0));
        let rot = pivot.conj() / pivot.norm();
        self.scale(rot)
    }

    /// Hashable key of the phase-canonical form, quantized to a `1e-9` grid.
    pub fn canonical_key(&self) -> Vec<i64> {
        let canon = self.phase_canonical();
        canon
            .data
            .iter()
            .flat_map(|z| [quantize(z.re), quantize(z.im)])
            .collect()
    }

    /// `self ← G·self` where `G` is `kernel` embedded on `qubits`.
    pub fn apply_left(&mut self, kernel: &Self, qubits: &[usize]) {
        let n = self.n_qubits();
        let d = self.dim;
        let k = kernel.dim;
        debug_assert_eq!(k, 1 << qubits.len());
        let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n - 1 - q)).collect();
        let gate_bits: usize = masks.iter().sum();
        let offsets: Vec<usize> = (0..k)
            .map(|s| {
                masks
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| s & (1 << (qubits.len() - 1 - j)) != 0)
                    .map(|(_, m)| m)
                    .sum()
            })
            .collect();
        let mut gathered = vec![Complex64::new(0.0, 0.0); k];
        for base in (0..d).filter(|b| b & gate_bits == 0) {
            for col in 0..d {
                for (s, off) in offsets.iter().enumerate() {
                    gathered[s] = self.data[(base | off) * d + col];
                }
                for (r, off) in offsets.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (s, g) in gathered.iter().enumerate() {
                        acc += kernel.data[r * k + s] * g;
                    }
                    self.data[(base | off) * d + col] = acc;
                }
            }
        }
    }
}

fn quantize(x: f64) -> i64 {
    let q = (x * 1e9).round();
    // avoid a distinct key for -0
    if q == 0.0 {
        0
    } else {
        q as i64
    }
}

/// Embeds a `2^k × 2^k` kernel acting on `qubits` into an `n`-qubit operator.
///
/// `qubits[0]` is the kernel's most significant index bit.
pub fn embed_gate(kernel: &ComplexMatrix, qubits: &[usize], n: usize) -> Result<ComplexMatrix> {
    if kernel.dim != 1 << qubits.len() {
        return Err(Error::InvalidPlacement(format!(
            "kernel of dimension {} cannot act on {} qubit(s)",
            kernel.dim,
            qubits.len()
        )));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(Error::InvalidPlacement(format!(
                "qubit {q} out of range for {n} qubit(s)"
            )));
        }
        if qubits[..i].contains(&q) {
            return Err(Error::InvalidPlacement(format!("duplicate qubit {q}")));
        }
    }
    let mut out = ComplexMatrix::identity(1 << n);
    out.apply_left(kernel, qubits);
    Ok(out)
}

/// Serialized unitary: `{ "n_qubits", "real", "imag" }`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct UnitaryFile {
    pub n_qubits: usize,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl UnitaryFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self {
            n_qubits: m.n_qubits(),
            real: m.real_rows(),
            imag: m.imag_rows(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let m = ComplexMatrix::from_parts(&self.real, &self.imag)?;
        if m.n_qubits() != self.n_qubits {
            return Err(Error::Shape(format!(
                "n_qubits = {} but matrix has dimension {}",
                self.n_qubits,
                m.dim()
            )));
        }
        if !m.is_unitary(UNITARY_TOL) {
            return Err(Error::Shape("matrix is not unitary".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(-1.0, 0.0)])
    }

    #[test]
    fn embed_on_single_qubit_is_the_kernel() {
        let h = ComplexMatrix::from_row_major(
            2,
            vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
        )
        .unwrap()
        .scale(c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert!(embed_gate(&h, &[0], 1).unwrap().approx_eq(&h, 0.0));
    }

    #[test]
    fn embed_matches_kronecker_products() {
        let z = pauli_z();
        let i2 = ComplexMatrix::identity(2);
        // qubit 0 is the most significant factor
        let z_on_1 = embed_gate(&z, &[1], 2).unwrap();
        assert!(z_on_1.approx_eq(&i2.kron(&z), 0.0));
        let expected = ComplexMatrix::from_diagonal(&[c(1., 0.), c(-1., 0.), c(1., 0.), c(-1., 0.)]);
        assert!(z_on_1.approx_eq(&expected, 0.0));
        assert!(embed_gate(&z, &[0], 3)
            .unwrap()
            .approx_eq(&z.kron(&i2).kron(&i2), 0.0));
    }

    #[test]
    fn embed_rejects_bad_placements() {
        let z = pauli_z();
        assert!(matches!(embed_gate(&z, &[2], 2), Err(Error::InvalidPlacement(_))));
        let cz = ComplexMatrix::from_diagonal(&[c(1., 0.), c(1., 0.), c(1., 0.), c(-1., 0.)]);
        assert!(matches!(embed_gate(&cz, &[1, 1], 2), Err(Error::InvalidPlacement(_))));
        assert!(matches!(embed_gate(&cz, &[0], 2), Err(Error::InvalidPlacement(_))));
    }

    #[test]
    fn two_qubit_kernel_on_reversed_qubits() {
        // CX with control 1, target 0 on two qubits swaps |01> and |11>.
        let cx = ComplexMatrix::from_permutation(4, |i| if i & 2 != 0 { i ^ 1 } else { i });
        let rev = embed_gate(&cx, &[1, 0], 2).unwrap();
        let expected = ComplexMatrix::from_permutation(4, |i| if i & 1 != 0 { i ^ 2 } else { i });
        assert!(rev.approx_eq(&expected, 0.0));
    }

    #[test]
    fn phase_canonical_key_ignores_global_phase() {
        let z = pauli_z().kron(&ComplexMatrix::identity(2));
        let rotated = z.scale(Complex64::from_polar(1.0, 0.77));
        assert_eq!(z.canonical_key(), rotated.canonical_key());
        assert!(z.equal_up_to_phase(&rotated, 1e-12));
        assert_ne!(z.canonical_key(), ComplexMatrix::identity(4).canonical_key());
    }

    #[test]
    fn unitary_file_rejects_non_unitary() {
        let file = UnitaryFile {
            n_qubits: 1,
            real: vec![vec![1.0, 1.0], vec![0.0, 1.0]],
            imag: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert!(file.to_matrix().is_err());
        let ok = UnitaryFile::from_matrix(&pauli_z());
        assert_eq!(ok.to_matrix().unwrap(), pauli_z());
    }
}
