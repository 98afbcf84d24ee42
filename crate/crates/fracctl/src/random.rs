//! Seeded random test instances.

use crate::frac_ode::FieldDescriptor;
use crate::grid::{SampledFunction, TimeGrid};
use crate::problem::{Numerics, ProblemSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// One random linear instance on [0, T].
#[derive(Clone, Debug)]
pub struct LinearInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub alpha: f64,
    pub t_final: f64,
    pub y0: DVector<f64>,
    pub yb: DVector<f64>,
    /// Built so that the Kalman condition fails.
    pub deficient: bool,
}

impl LinearInstance {
    /// g(t) = 1 + ½ sin(2πt/T) on an n-step grid.
    pub fn g(&self, n: usize) -> SampledFunction<f64> {
        let grid = TimeGrid::new(0.0, self.t_final, n).expect("positive horizon");
        let tf = self.t_final;
        SampledFunction::scalar_from_fn(grid, |t| 1.0 + 0.5 * (2.0 * PI * t / tf).sin()).expect("grid has nodes")
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct InstanceGenerator {
    seed: u64,
    rng: ChaCha8Rng,
}

impl InstanceGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn int(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        self.rng.random_range(lo..=hi_inclusive)
    }

    pub fn normal_matrix(&mut self, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| self.normal())
    }

    pub fn normal_vector(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.normal())
    }

    /// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
    /// signs of R's diagonal moved into Q.
    pub fn haar_orthogonal(&mut self, d: usize) -> DMatrix<f64> {
        let qr = self.normal_matrix(d, d).qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        q
    }

    /// A = QΛQᵀ with eigenvalues uniform in [0, 2].
    pub fn psd_matrix(&mut self, d: usize) -> DMatrix<f64> {
        let lam: Vec<f64> = (0..d).map(|_| self.uniform(0.0, 2.0)).collect();
        self.with_spectrum(&lam)
    }

    pub fn with_spectrum(&mut self, lam: &[f64]) -> DMatrix<f64> {
        let q = self.haar_orthogonal(lam.len());
        let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(lam)) * q.transpose();
        (&a + a.transpose()) * 0.5
    }

    /// d in [1, d_max], N in [1, d], α in [0.5, 0.9], T = 1, generic (controllable
    /// with probability one).
    pub fn linear(&mut self, d_max: usize) -> LinearInstance {
        let d = self.int(1, d_max);
        let n_in = self.int(1, d);
        let alpha = self.uniform(0.5, 0.9);
        let a = self.psd_matrix(d);
        let b = self.normal_matrix(d, n_in);
        let y0 = self.normal_vector(d);
        let yb = self.normal_vector(d);
        LinearInstance { a, b, alpha, t_final: 1.0, y0, yb, deficient: false }
    }

    /// Like [`Self::linear`], redrawing until the pair is controllable.
    pub fn controllable(&mut self, d_max: usize) -> LinearInstance {
        loop {
            let inst = self.linear(d_max);
            let (rank, ok) = crate::linear_control::kalman_rank(&inst.a, &inst.b).expect("consistent shapes");
            if ok && rank == inst.dim() {
                return inst;
            }
        }
    }

    /// A Kalman-deficient instance with d >= 2: either every column of B lies in
    /// an invariant subspace of A, or A has a repeated eigenvalue whose
    /// eigenspace is larger than N.
    pub fn deficient(&mut self, d_max: usize) -> LinearInstance {
        let d = self.int(2, d_max.max(2));
        let alpha = self.uniform(0.5, 0.9);
        let (a, b) = if self.rng.random_bool(0.5) {
            let lam: Vec<f64> = (0..d).map(|_| self.uniform(0.0, 2.0)).collect();
            let q = self.haar_orthogonal(d);
            let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(&lam)) * q.transpose();
            let k = self.int(1, d - 1);
            let n_in = self.int(1, d);
            // columns of B in the span of the first k eigenvectors
            let coeff = self.normal_matrix(k, n_in);
            let b = q.columns(0, k) * coeff;
            ((&a + a.transpose()) * 0.5, b)
        } else {
            let mult = self.int(2, d);
            let shared = self.uniform(0.0, 2.0);
            let mut lam: Vec<f64> = vec![shared; mult];
            lam.extend((mult..d).map(|_| self.uniform(0.0, 2.0)));
            let a = self.with_spectrum(&lam);
            let n_in = self.int(1, mult - 1);
            (a, self.normal_matrix(d, n_in))
        };
        let y0 = self.normal_vector(d);
        let yb = self.normal_vector(d);
        LinearInstance { a, b, alpha, t_final: 1.0, y0, yb, deficient: true }
    }

    /// A nonlinear problem on a controllable random instance with the given field.
    pub fn problem(&mut self, d_max: usize, f: FieldDescriptor, numerics: Numerics) -> ProblemSpec {
        let inst = self.controllable(d_max);
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        ProblemSpec {
            alpha: inst.alpha,
            t_final: inst.t_final,
            d: inst.dim(),
            n_inputs: inst.b.ncols(),
            a: rows(&inst.a),
            b: rows(&inst.b),
            y0: inst.y0.as_slice().to_vec(),
            y_t: inst.yb.as_slice().to_vec(),
            f,
            numerics,
            seed: self.seed,
        }
    }
}
