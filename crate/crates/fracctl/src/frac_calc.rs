//! Discrete fractional integrals and derivatives on uniform grids.
//!
//! Integrals use product trapezoidal weights: the sampled function is
//! interpolated linearly on each panel and the kernel (t - τ)^(α-1) is
//! integrated exactly. The left Caputo derivative is the L1 scheme with a
//! two-term starting correction that makes it exact on t^α, which is how
//! fractional integrals and solutions of Caputo equations start out.

use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::scalar::{from_usize, lit, Real};
use crate::special_functions::gamma_pos;
use nalgebra::DVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeKind {
    CaputoLeft,
    RlRight,
}

pub(crate) fn check_order<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("fractional order must lie in (0, 1), got {alpha}")))
    }
}

/// (d+1)^p - d^p without cancellation.
pub(crate) fn forward_diff_pow<T: Real>(d: usize, p: T) -> T {
    if d == 0 {
        return T::one();
    }
    let df: T = from_usize(d);
    let u = T::one() / df;
    df.powf(p) * (p * u.ln_1p()).exp_m1()
}

/// (d+1)^p - 2 d^p + (d-1)^p for d >= 1 without cancellation.
pub(crate) fn second_diff_pow<T: Real>(d: usize, p: T) -> T {
    debug_assert!(d >= 1);
    let df: T = from_usize(d);
    let u = T::one() / df;
    if d < 24 {
        let plus = (p * u.ln_1p()).exp_m1();
        let minus = (p * (-u).ln_1p()).exp_m1();
        return df.powf(p) * (plus + minus);
    }
    // 2 d^p Σ_k C(p, 2k) u^(2k)
    let u2 = u * u;
    let mut binom = T::one();
    let mut upow = T::one();
    let mut acc = T::zero();
    for k in 1..=12usize {
        let j0: T = from_usize(2 * k - 2);
        let j1: T = from_usize(2 * k - 1);
        binom = binom * (p - j0) / (j0 + T::one()) * (p - j1) / (j1 + T::one());
        upow *= u2;
        let term = binom * upow;
        acc += term;
        if term.abs() <= T::EPS * lit(1e-3) * acc.abs() {
            break;
        }
    }
    lit::<T>(2.0) * df.powf(p) * acc
}

/// Product-trapezoid weights for ₐI^α at target index `n`:
/// I_n = h^α / Γ(α+2) · Σ_j w[n-j] f_j, returned as (interior table by distance, boundary weight for j = 0).
pub(crate) struct TrapezoidWeights<T: Real> {
    alpha: T,
    /// w[d] for distance d = n - j with 1 <= j <= n (w[0] = 1).
    interior: Vec<T>,
}

impl<T: Real> TrapezoidWeights<T> {
    pub fn new(alpha: T, n_max: usize) -> Self {
        let p = alpha + T::one();
        let mut interior = Vec::with_capacity(n_max + 1);
        interior.push(T::one());
        for d in 1..=n_max {
            interior.push(second_diff_pow(d, p));
        }
        Self { alpha, interior }
    }

    /// Weight of node j = 0 for target n >= 1.
    pub fn start(&self, n: usize) -> T {
        let nf: T = from_usize(n);
        let nm1 = nf - T::one();
        let p = self.alpha + T::one();
        nm1.powf(p) - (nm1 - self.alpha) * nf.powf(self.alpha)
    }

    pub fn distance(&self, d: usize) -> T {
        self.interior[d]
    }
}

fn left_integral_scalar<T: Real>(f: &[T], alpha: T, h: T) -> Vec<T> {
    let n = f.len() - 1;
    let w = TrapezoidWeights::new(alpha, n);
    let scale = h.powf(alpha) / gamma_pos(alpha + lit(2.0));
    let mut out = vec![T::zero(); n + 1];
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let mut acc = w.start(m) * f[0];
        for (j, &fj) in f.iter().enumerate().take(m + 1).skip(1) {
            acc += w.distance(m - j) * fj;
        }
        *slot = scale * acc;
    }
    out
}

fn per_component<T: Real, F: Fn(&[T]) -> Vec<T>>(f: &SampledFunction<T>, op: F) -> Result<SampledFunction<T>> {
    let dim = f.dim();
    let cols: Vec<Vec<T>> = (0..dim).map(|i| op(&f.component(i))).collect();
    let values = (0..f.grid().len()).map(|j| DVector::from_fn(dim, |i, _| cols[i][j])).collect();
    SampledFunction::new(*f.grid(), values)
}

/// Left (ₐI_t^α) or right (ₜI_b^α) Riemann-Liouville integral at every node.
pub fn rl_integral<T: Real>(f: &SampledFunction<T>, alpha: T, side: Side) -> Result<SampledFunction<T>> {
    check_order(alpha)?;
    let h = f.grid().step();
    per_component(f, |col| match side {
        Side::Left => left_integral_scalar(col, alpha, h),
        Side::Right => {
            let rev: Vec<T> = col.iter().rev().copied().collect();
            let mut out = left_integral_scalar(&rev, alpha, h);
            out.reverse();
            out
        }
    })
}

/// L1 Caputo derivative at every node (0 at t = a).
fn caputo_l1_scalar<T: Real>(f: &[T], alpha: T, h: T) -> Vec<T> {
    let n = f.len() - 1;
    let q = T::one() - alpha;
    let b: Vec<T> = (0..n).map(|k| forward_diff_pow(k, q)).collect();
    let scale = h.powf(-alpha) / gamma_pos(lit::<T>(2.0) - alpha);
    let mut out = vec![T::zero(); n + 1];
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let mut acc = T::zero();
        for j in 0..m {
            acc += b[m - 1 - j] * (f[j + 1] - f[j]);
        }
        *slot = scale * acc;
    }
    out
}

/// L1 plus starting weights on f_1 - f_0 and f_2 - f_0, exact on 1, t and t^α.
fn caputo_left_scalar<T: Real>(f: &[T], alpha: T, h: T) -> Vec<T> {
    let n = f.len() - 1;
    let mut out = caputo_l1_scalar(f, alpha, h);
    if n < 2 {
        return out;
    }
    let unit: Vec<T> = (0..=n).map(|k| from_usize::<T>(k).powf(alpha)).collect();
    let l1_unit = caputo_l1_scalar(&unit, alpha, T::one());
    let exact = gamma_pos(T::one() + alpha);
    let denom = lit::<T>(2.0).powf(alpha) - lit(2.0);
    let (d1, d2) = (f[1] - f[0], f[2] - f[0]);
    let scale = h.powf(-alpha);
    for m in 1..=n {
        let w2 = (exact - l1_unit[m]) / denom;
        out[m] += scale * w2 * (d2 - lit::<T>(2.0) * d1);
    }
    out
}

/// Right Caputo derivative -(1/Γ(1-α)) ∫_t^b (s-t)^(-α) f'(s) ds by the mirrored L1 scheme.
fn right_caputo_l1_scalar<T: Real>(f: &[T], alpha: T, h: T) -> Vec<T> {
    let rev: Vec<T> = f.iter().rev().copied().collect();
    let mut out = caputo_l1_scalar(&rev, alpha, h);
    out.reverse();
    out
}

fn rl_right_scalar<T: Real>(f: &[T], alpha: T, h: T) -> Vec<T> {
    let n = f.len() - 1;
    let mut out = right_caputo_l1_scalar(f, alpha, h);
    let c = f[n] / gamma_pos(T::one() - alpha);
    for (i, slot) in out.iter_mut().enumerate().take(n) {
        let dist = h * from_usize(n - i);
        *slot += c * dist.powf(-alpha);
    }
    out[n] = T::zero();
    out
}

/// Left Caputo derivative (corrected L1) or right Riemann-Liouville derivative.
///
/// The right derivative is the exact outer derivative of ₜI_b^(1-α) applied to
/// the piecewise-linear interpolant: f(b)(b-t)^(-α)/Γ(1-α) plus the mirrored L1 sum.
pub fn frac_derivative<T: Real>(f: &SampledFunction<T>, alpha: T, kind: DerivativeKind) -> Result<SampledFunction<T>> {
    check_order(alpha)?;
    if f.grid().n() < 4 {
        return Err(Error::input("fractional derivative needs at least 4 intervals"));
    }
    let h = f.grid().step();
    per_component(f, |col| match kind {
        DerivativeKind::CaputoLeft => caputo_left_scalar(col, alpha, h),
        DerivativeKind::RlRight => rl_right_scalar(col, alpha, h),
    })
}

pub(crate) fn trapezoid<T: Real>(f: &[T], h: T) -> T {
    let n = f.len() - 1;
    let mut acc = (f[0] + f[n]) * lit(0.5);
    for v in &f[1..n] {
        acc += *v;
    }
    acc * h
}

/// |LHS - RHS| of the fractional integration by parts identity
/// ∫ f ᶜD^α g dt = [ₜI_b^(1-α) f · g]_a^b + ∫ (ₜD_b^α f) g dt.
pub fn integration_by_parts_residual<T: Real>(f: &SampledFunction<T>, g: &SampledFunction<T>, alpha: T) -> Result<T> {
    check_order(alpha)?;
    if !f.grid().same_as(g.grid()) {
        return Err(Error::input("integration by parts needs f and g on the same grid"));
    }
    if f.dim() != 1 || g.dim() != 1 {
        return Err(Error::input("integration by parts expects scalar f and g"));
    }
    if f.grid().n() < 4 {
        return Err(Error::input("integration by parts needs at least 4 intervals"));
    }
    let h = f.grid().step();
    let n = f.grid().n();
    let fv = f.component(0);
    let gv = g.component(0);
    let one_minus = T::one() - alpha;

    let dg = caputo_left_scalar(&gv, alpha, h);
    let lhs_vals: Vec<T> = fv.iter().zip(&dg).map(|(a, b)| *a * *b).collect();
    let lhs = trapezoid(&lhs_vals, h);

    // boundary: ₜI_b^(1-α) f vanishes at b
    let rev: Vec<T> = fv.iter().rev().copied().collect();
    let right_int_at_a = left_integral_scalar(&rev, one_minus, h)[n];
    let boundary = -right_int_at_a * gv[0];

    // singular part f(b)(b-t)^(-α)/Γ(1-α) integrated exactly against g
    let singular = fv[n] * left_integral_scalar(&gv, one_minus, h)[n];
    let rc = right_caputo_l1_scalar(&fv, alpha, h);
    let regular_vals: Vec<T> = rc.iter().zip(&gv).map(|(a, b)| *a * *b).collect();
    let rhs = boundary + singular + trapezoid(&regular_vals, h);
    Ok((lhs - rhs).abs())
}
