#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qctrl_core::quantum::{CMatrix, ControlSystem, HermitianOperator};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng(ChaCha20Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

pub fn random_hermitian(rng: &mut Rng, dim: usize, scale: f64) -> HermitianOperator {
    let mut m = CMatrix::zeros(dim, dim);
    for a in 0..dim {
        m[(a, a)] = Complex64::new(scale * rng.range(-1.0, 1.0), 0.0);
        for b in a + 1..dim {
            let z = Complex64::new(scale * rng.range(-1.0, 1.0), scale * rng.range(-1.0, 1.0));
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
        }
    }
    HermitianOperator::new(m).unwrap()
}

pub fn random_system(rng: &mut Rng, qubits: usize, controllers: usize, steps: usize, t_f: f64) -> ControlSystem {
    let dim = 1 << qubits;
    let h0 = random_hermitian(rng, dim, 0.5);
    let controls = (0..controllers).map(|_| random_hermitian(rng, dim, 1.0)).collect();
    ControlSystem::new(qubits, t_f, steps, h0, controls, CMatrix::identity(dim, dim)).unwrap()
}

pub fn random_controls(rng: &mut Rng, n: usize, t: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |_, _| rng.range(lo, hi))
}

/// `e^{-iH t}` by scaling and squaring a 40-term Taylor series.
pub fn taylor_expm(h: &CMatrix, t: f64) -> CMatrix {
    let a = h * Complex64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 2).max(0);
    let a = a / Complex64::new(2f64.powi(squarings), 0.0);
    let n = h.nrows();
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `|a − b| ≤ rel·max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}
