//! Dense `f64` tensors with tape-based reverse-mode differentiation.

pub mod check;
mod optim;
mod tape;

pub use optim::{AdamWConfig, AdamWState, LrSchedule, ParamRef};
pub use tape::{Tape, TensorId};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand_distr::{Distribution, Normal};

/// A dense row-major tensor. Values are immutable once produced by an op;
/// the gradient buffer is allocated lazily during the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Build a tensor, validating the shape product and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    /// A trainable parameter tensor.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    /// Normal(0, std^2) initialization.
    pub fn randn(rng: &mut Rng, shape: Vec<usize>, std: f64) -> Self {
        let dist = Normal::new(0.0, std).expect("std must be finite");
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| dist.sample(rng)).collect();
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self. numel() == 1
    }

    /// Rows of a 2-D tensor (a 1-D tensor counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn detach(mut self) -> Self {
        self.requires_grad = false;
        self.grad = None;
        self
    }
}

// ── Raw 2-D kernels (also used by the backward pass) ──────────────────

/// C[m,n] = A[m,k] · B[k,n]
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ
pub(crate) fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += a_row[p] * b_row[p];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// C[k,n] = A[m,k]ᵀ · B[m,n]
pub(crate) fn matmul_tn_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for p in 0..m {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..k {
            let a_pi = a[p * k + i];
            if a_pi == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += a_pi * b_row[j];
            }
        }
    }
    c
}

#[cfg(test)]
mod kernel_tests {
    use super::*;

    #[test]
    fn nt_and_tn_agree_with_explicit_transpose() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, -1.0, 0.5, 2.0, 0.0, 3.0]; // 2x3
        // A(2x3) · Bᵀ(3x2) -> 2x2
        let nt = matmul_nt_raw(&a, &b, 2, 3, 2);
        let bt = [1.0, 0.5, 0.0, -1.0, 2.0, 3.0]; // 3x2 transpose of b
        assert_eq!(nt, matmul_raw(&a, &bt, 2, 3, 2));
        // Aᵀ(3x2) · B(2x3) -> 3x3
        let tn = matmul_tn_raw(&a, &b, 2, 3, 3);
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2 transpose of a
        assert_eq!(tn, matmul_raw(&at, &b, 3, 2, 3));
    }
}
