//! Terminal control of ᶜD^α y = A g(t) y + B u on [a, b]: Kalman test, weighted
//! Gramian, minimum-energy control, observability of the adjoint system and the
//! quadratic functional whose minimizer produces the control.
//!
//! Kernels are evaluated through F(t) = (b-t)^(1-α) Φ(t, b), which is bounded,
//! so every integral carries at most the explicit weight (b-t)^(α-1).

use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::scalar::{lit, Real};
use crate::special_functions::rgamma;
use crate::transition::{r_alpha_plus, spectral_norm, TransitionKernel};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Singular values below this fraction of the largest are treated as zero.
pub const KALMAN_TOL: f64 = 1e-10;
/// A Gramian or observability matrix is nonsingular when λ_min > SINGULAR_TOL·λ_max.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Rank of [B | AB | ... | A^(d-1) B] and whether it equals d.
pub fn kalman_rank<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<(usize, bool)> {
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return Err(Error::input(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    let n = b.ncols();
    if b.nrows() != d || n == 0 || n > d {
        return Err(Error::input(format!("B must be {d}xN with 1 <= N <= {d}, got {}x{n}", b.nrows())));
    }
    let mut blocks = DMatrix::zeros(d, d * n);
    let mut power = b.clone();
    for k in 0..d {
        blocks.columns_mut(k * n, n).copy_from(&power);
        power = a * power;
    }
    let sv = blocks.singular_values();
    let smax = sv.max();
    let rank = if smax > T::zero() {
        let cut = smax * lit(KALMAN_TOL);
        sv.iter().filter(|&&s| s > cut).count()
    } else {
        0
    };
    Ok((rank, rank == d))
}

fn check_input_matrix<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>) -> Result<()> {
    let d = k.dim();
    if b.nrows() != d || b.ncols() == 0 {
        return Err(Error::input(format!("B must have {d} rows and at least one column")));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("B is not finite"));
    }
    Ok(())
}

fn sym_eigen_range<T: Real>(m: &DMatrix<T>) -> (T, T) {
    let e = SymmetricEigen::new(m.clone()).eigenvalues;
    (e.min(), e.max())
}

/// Σ w_j F_j M F_j in the eigenbasis, with M = UᵀBBᵀU and F_j diagonal.
fn weighted_diag_integral<T: Real>(k: &TransitionKernel<T>, m: &DMatrix<T>, w: &[T], scale: T) -> DMatrix<T> {
    let d = k.dim();
    let mut acc = DMatrix::zeros(d, d);
    for (j, &wj) in w.iter().enumerate() {
        let f = k.phi_regularized_diag(j);
        for q in 0..d {
            for p in 0..d {
                acc[(p, q)] += wj * f[p] * f[q] * m[(p, q)];
            }
        }
    }
    acc * scale
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gramian<T: Real> {
    w: DMatrix<T>,
    w_d: DMatrix<T>,
    interval: (T, T),
    alpha: T,
    min_eigenvalue: T,
    max_eigenvalue: T,
}

impl<T: Real> Gramian<T> {
    /// Wraps a symmetric matrix, e.g. for tests of the minimizer.
    pub fn from_matrix(w: DMatrix<T>, interval: (T, T), alpha: T) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(Error::input("Gramian must be square and non-empty"));
        }
        let w = (&w + w.transpose()) * lit::<T>(0.5);
        let (lo, hi) = sym_eigen_range(&w);
        Ok(Self { w_d: w.clone(), w, interval, alpha, min_eigenvalue: lo, max_eigenvalue: hi })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.w
    }

    /// W_D with W = U W_D Uᵀ, U the eigenvectors of A.
    pub fn diagonal_form(&self) -> &DMatrix<T> {
        &self.w_d
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn min_eigenvalue(&self) -> T {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> T {
        self.max_eigenvalue
    }

    /// λ_max / λ_min, infinite when singular.
    pub fn condition(&self) -> T {
        if self.min_eigenvalue > T::zero() {
            self.max_eigenvalue / self.min_eigenvalue
        } else {
            lit(f64::INFINITY)
        }
    }

    pub fn is_nonsingular(&self) -> bool {
        self.max_eigenvalue > T::zero() && self.min_eigenvalue > self.max_eigenvalue * lit(SINGULAR_TOL)
    }

    fn singular_error(&self, detail: &str) -> Error {
        Error::NotControllable {
            detail: format!(
                "{detail}: Gramian λ_min = {:e}, λ_max = {:e}",
                crate::scalar::to_f64(self.min_eigenvalue),
                crate::scalar::to_f64(self.max_eigenvalue)
            ),
            rank: None,
            lambda_min: Some(crate::scalar::to_f64(self.min_eigenvalue)),
            lambda_max: Some(crate::scalar::to_f64(self.max_eigenvalue)),
        }
    }
}

/// W(a, b) = ∫ (b-t)^(α-1) F(t) B Bᵀ F(t)ᵀ dt.
pub fn gramian<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>) -> Result<Gramian<T>> {
    check_input_matrix(k, b)?;
    let u = k.diag().u();
    let bt = u.transpose() * b;
    let m = &bt * bt.transpose();
    let grid = k.grid();
    let scale = grid.length().powf(k.alpha());
    let w_d = weighted_diag_integral(k, &m, k.bank().terminal(), scale);
    let w_d = (&w_d + w_d.transpose()) * lit::<T>(0.5);
    let w = u * &w_d * u.transpose();
    let w = (&w + w.transpose()) * lit::<T>(0.5);
    let (lo, hi) = sym_eigen_range(&w);
    Ok(Gramian { w, w_d, interval: (grid.a(), grid.b()), alpha: k.alpha(), min_eigenvalue: lo, max_eigenvalue: hi })
}

/// ẑ_b = W⁻¹ (y_b - Ψ(a, b) y0).
pub fn minimizer_zb<T: Real>(w: &Gramian<T>, psi_ab: &DMatrix<T>, y0: &DVector<T>, yb: &DVector<T>) -> Result<DVector<T>> {
    let d = w.matrix().nrows();
    if psi_ab.shape() != (d, d) || y0.len() != d || yb.len() != d {
        return Err(Error::input(format!("minimizer expects {d}x{d} Ψ and {d}-vectors")));
    }
    if !w.is_nonsingular() {
        return Err(w.singular_error("Gramian is singular"));
    }
    let rhs = yb - psi_ab * y0;
    let sol = match w.matrix().clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => w.matrix().clone().lu().solve(&rhs).ok_or_else(|| w.singular_error("Gramian factorization failed"))?,
    };
    Ok(sol)
}

/// F(t_j) z_b at every node, i.e. the adjoint solution Φ(t, b) z_b with the
/// (b-t)^(1-α) factor applied.
pub fn adjoint_regularized<T: Real>(k: &TransitionKernel<T>, z_b: &DVector<T>) -> Vec<DVector<T>> {
    let diag = k.diag();
    let zt = diag.vec_to_eigen(z_b);
    (0..=k.grid().n()).map(|j| diag.vec_from_eigen(&k.phi_regularized_diag(j).component_mul(&zt))).collect()
}

/// z0 = ₜI_b^(1-α) z |_{t=a} for the adjoint solution with datum z_b.
pub fn adjoint_initial_datum<T: Real>(k: &TransitionKernel<T>, z_b: &DVector<T>) -> DVector<T> {
    let diag = k.diag();
    let zt = diag.vec_to_eigen(z_b);
    let w = k.bank().initial_adjoint();
    let mut acc = DVector::zeros(k.dim());
    for (j, &wj) in w.iter().enumerate() {
        acc += k.phi_regularized_diag(j).component_mul(&zt) * wj;
    }
    diag.vec_from_eigen(&(acc * rgamma(T::one() - k.alpha())))
}

/// u(t) = Bᵀ (b-t)^(1-α) Φ(t, b)ᵀ z_b.
pub fn control_from_datum<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>, z_b: &DVector<T>) -> Result<SampledFunction<T>> {
    check_input_matrix(k, b)?;
    let bt = b.transpose();
    let values = adjoint_regularized(k, z_b).iter().map(|v| &bt * v).collect();
    SampledFunction::new(*k.grid(), values)
}

/// (∫ |u|² dt)^(1/2), quadratic in (b-t)^α near the terminal node.
pub fn l2_norm<T: Real>(k: &TransitionKernel<T>, u: &SampledFunction<T>) -> Result<T> {
    if !u.grid().same_as(k.grid()) {
        return Err(Error::input("control must live on the kernel grid"));
    }
    let w = k.bank().regular();
    let s = w.iter().zip(u.values()).fold(T::zero(), |s, (&wj, v)| s + wj * v.norm_squared());
    Ok((s * k.grid().length()).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlLaw<T: Real> {
    pub z_hat_b: DVector<T>,
    pub u: SampledFunction<T>,
    pub gramian: Gramian<T>,
    pub target: DVector<T>,
    pub initial: DVector<T>,
    pub l2_norm: T,
}

fn not_controllable(rank: usize, d: usize) -> Error {
    Error::NotControllable { detail: format!("Kalman rank {rank} < {d}"), rank: Some(rank), lambda_min: None, lambda_max: None }
}

/// Minimum-energy control steering y0 to yb at t = b.
pub fn synthesize_linear<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>, y0: &DVector<T>, yb: &DVector<T>) -> Result<ControlLaw<T>> {
    check_input_matrix(k, b)?;
    let d = k.dim();
    if y0.len() != d || yb.len() != d {
        return Err(Error::input(format!("initial and target states must have dimension {d}")));
    }
    let (rank, ok) = kalman_rank(&k.diag().reconstruct(), b)?;
    if !ok {
        return Err(not_controllable(rank, d));
    }
    let gram = gramian(k, b)?;
    let z_hat_b = minimizer_zb(&gram, &k.psi_ab(), y0, yb)?;
    let u = control_from_datum(k, b, &z_hat_b)?;
    let l2 = l2_norm(k, &u)?;
    Ok(ControlLaw { z_hat_b, u, gramian: gram, target: yb.clone(), initial: y0.clone(), l2_norm: l2 })
}

/// y(t) = Ψ(a, t) y0 + ∫_a^t Φ(τ, t) B u(τ) dτ. The value at b uses the same
/// terminal weights as the Gramian.
pub fn apply_control<T: Real>(
    k: &TransitionKernel<T>,
    b: &DMatrix<T>,
    u: &SampledFunction<T>,
    y0: &DVector<T>,
) -> Result<SampledFunction<T>> {
    check_input_matrix(k, b)?;
    if !u.grid().same_as(k.grid()) {
        return Err(Error::input("control must live on the kernel grid"));
    }
    if u.dim() != b.ncols() || y0.len() != k.dim() {
        return Err(Error::input("control or initial state has the wrong dimension"));
    }
    let p = u.map(|v| b * v)?;
    let mut forced = k.forced_response(&p)?;
    let n = k.grid().n();
    forced[n] = k.forced_at_terminal(&p)?;
    let mut values: Vec<DVector<T>> = forced.into_iter().enumerate().map(|(j, f)| k.psi(j) * y0 + f).collect();
    values[0] = y0.clone();
    SampledFunction::new(*k.grid(), values)
}

/// ½ ∫ |Bᵀ (b-t)^((1-α)/2) z(t)|² dt - ⟨y_b, z_b⟩ + ⟨y0, z0⟩.
pub fn functional_j<T: Real>(z_b: &DVector<T>, k: &TransitionKernel<T>, b: &DMatrix<T>, y0: &DVector<T>, yb: &DVector<T>) -> Result<T> {
    let q = weighted_pairing(k, b, z_b, z_b)?;
    let z0 = adjoint_initial_datum(k, z_b);
    Ok(q * lit(0.5) - yb.dot(z_b) + y0.dot(&z0))
}

/// ∫ (b-t)^(1-α) ⟨Bᵀ z1(t), Bᵀ z2(t)⟩ dt for adjoint solutions with data z1, z2.
fn weighted_pairing<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>, z1: &DVector<T>, z2: &DVector<T>) -> Result<T> {
    check_input_matrix(k, b)?;
    let d = k.dim();
    if z1.len() != d || z2.len() != d {
        return Err(Error::input(format!("adjoint data must have dimension {d}")));
    }
    let bt = b.transpose();
    let r1 = adjoint_regularized(k, z1);
    let r2 = adjoint_regularized(k, z2);
    let w = k.bank().terminal();
    let s = (0..w.len()).fold(T::zero(), |s, j| s + w[j] * (&bt * &r1[j]).dot(&(&bt * &r2[j])));
    Ok(s * k.grid().length().powf(k.alpha()))
}

/// |∫⟨Bᵀ(b-t)^((1-α)/2) ẑ, Bᵀ(b-t)^((1-α)/2) z⟩ dt + ⟨y0, z0⟩ - ⟨y_b, z_b⟩|,
/// which vanishes for every z_b exactly when ẑ_b minimizes J.
pub fn euler_lagrange_residual<T: Real>(
    z_hat_b: &DVector<T>,
    z_b: &DVector<T>,
    k: &TransitionKernel<T>,
    b: &DMatrix<T>,
    y0: &DVector<T>,
    yb: &DVector<T>,
) -> Result<T> {
    let q = weighted_pairing(k, b, z_hat_b, z_b)?;
    let z0 = adjoint_initial_datum(k, z_b);
    Ok((q + y0.dot(&z0) - yb.dot(z_b)).abs())
}

/// |⟨y0, z0⟩ - ⟨y(b), z_b⟩ + ∫ ⟨u, Bᵀ z⟩ dt| for the state driven by an
/// arbitrary control u and the adjoint solution with datum z_b.
pub fn duality_residual<T: Real>(
    k: &TransitionKernel<T>,
    b: &DMatrix<T>,
    u: &SampledFunction<T>,
    y0: &DVector<T>,
    z_b: &DVector<T>,
) -> Result<T> {
    let y = apply_control(k, b, u, y0)?;
    let yb = y.value(k.grid().n());
    let bt = b.transpose();
    let r = adjoint_regularized(k, z_b);
    let w = k.bank().terminal();
    let pair = (0..w.len()).fold(T::zero(), |s, j| s + w[j] * u.value(j).dot(&(&bt * &r[j])));
    let pair = pair * k.grid().length().powf(k.alpha());
    let z0 = adjoint_initial_datum(k, z_b);
    Ok((y0.dot(&z0) - yb.dot(z_b) + pair).abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityReport<T: Real> {
    /// O(a, b) = ∫ (b-t)^(2(1-α)) Φ(t, b)ᵀ B Bᵀ Φ(t, b) dt.
    pub matrix: DMatrix<T>,
    pub min_eigenvalue: T,
    pub max_eigenvalue: T,
    /// 1/λ_min(O), absent when the adjoint system is not observable.
    pub constant: Option<T>,
    /// Bᵀ z ≡ 0 forces z_b = 0.
    pub unique_continuation: bool,
}

pub fn observability_constant<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>) -> Result<ObservabilityReport<T>> {
    check_input_matrix(k, b)?;
    let u = k.diag().u();
    let bt = u.transpose() * b;
    let m = &bt * bt.transpose();
    let o_d = weighted_diag_integral(k, &m, k.bank().regular(), k.grid().length());
    let o = u * o_d * u.transpose();
    let o = (&o + o.transpose()) * lit::<T>(0.5);
    let (lo, hi) = sym_eigen_range(&o);
    let observable = hi > T::zero() && lo > hi * lit(SINGULAR_TOL);
    Ok(ObservabilityReport {
        matrix: o,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        constant: observable.then(|| T::one() / lo),
        unique_continuation: observable,
    })
}

/// Largest margins of the adjoint growth bound (b-t)^(1-α)|z(t)| ≤ r_{α+}|z_b|
/// and the pointwise control bound |u(t)| ≤ r_{α+}‖Bᵀ‖|ẑ_b|. Non-positive
/// values mean the bound holds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlBounds<T: Real> {
    pub r_alpha_plus: T,
    pub adjoint_excess: T,
    pub control_excess: T,
}

pub fn control_bounds<T: Real>(k: &TransitionKernel<T>, b: &DMatrix<T>, law: &ControlLaw<T>) -> Result<ControlBounds<T>> {
    check_input_matrix(k, b)?;
    let r = r_alpha_plus(k);
    let zn = law.z_hat_b.norm();
    let adj = adjoint_regularized(k, &law.z_hat_b);
    let adjoint_excess = adj.iter().map(|v| v.norm() - r * zn).fold(lit(f64::NEG_INFINITY), |m: T, x| m.max(x));
    let bn = spectral_norm(&b.transpose());
    let control_excess = law.u.values().iter().map(|v| v.norm() - r * bn * zn).fold(lit(f64::NEG_INFINITY), |m: T, x| m.max(x));
    Ok(ControlBounds { r_alpha_plus: r, adjoint_excess, control_excess })
}
