//! Gamma, Beta and real-argument Mittag-Leffler functions.

use crate::error::{Error, Result};
use crate::quadrature::{exp_sinh, tanh_sinh};
use crate::scalar::{from_usize, lit, CompensatedSum, Real};

/// Default absolute tolerance for Mittag-Leffler evaluation.
pub const ML_ABS_TOL: f64 = 1e-12;

/// `|x|^(1/alpha)` below which the alternating Taylor series is used for x < 0.
const SERIES_SWITCH: f64 = 3.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum<T: Real>(x: T) -> T {
    let mut a = lit::<T>(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += lit::<T>(*c) / (x + from_usize(i));
    }
    a
}

/// Gamma function for x > 0.
pub fn gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain(format!("gamma requires x > 0, got {x}")));
    }
    Ok(gamma_pos(x))
}

/// log Gamma for x > 0.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_pos(x))
}

/// Beta function B(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta<T: Real>(x: T, y: T) -> Result<T> {
    if !(x > T::zero()) || !(y > T::zero()) || !x.is_finite() || !y.is_finite() {
        return Err(Error::domain(format!("beta requires positive arguments, got ({x}, {y})")));
    }
    Ok(beta_pos(x, y))
}

pub(crate) fn gamma_pos<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x == x.round() && x <= lit(30.0) {
        // exact factorial for small integers
        let mut p = T::one();
        let mut k = lit::<T>(2.0);
        while k < x {
            p *= k;
            k += T::one();
        }
        return p;
    }
    if x < half {
        return T::pi() / ((T::pi() * x).sin() * gamma_pos(T::one() - x));
    }
    let xm = x - T::one();
    let a = lanczos_sum(xm);
    let t = xm + lit::<T>(LANCZOS_G) + half;
    // split the power so that it overflows only together with Γ itself
    let p = t.powf((xm + half) * half);
    T::two_pi().sqrt() * p * (p * (-t).exp()) * a
}

pub(crate) fn ln_gamma_pos<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        return (T::pi() / (T::pi() * x).sin()).ln() - ln_gamma_pos(T::one() - x);
    }
    let xm = x - T::one();
    let a = lanczos_sum(xm);
    let t = xm + lit::<T>(LANCZOS_G) + half;
    half * T::two_pi().ln() + (xm + half) * t.ln() - t + a.ln()
}

/// 1/Γ(x) for x > 0.
pub(crate) fn rgamma<T: Real>(x: T) -> T {
    if x > lit(170.0) {
        (-ln_gamma_pos(x)).exp()
    } else {
        T::one() / gamma_pos(x)
    }
}

pub(crate) fn beta_pos<T: Real>(x: T, y: T) -> T {
    if x + y < lit(150.0) {
        gamma_pos(x) * gamma_pos(y) / gamma_pos(x + y)
    } else {
        (ln_gamma_pos(x) + ln_gamma_pos(y) - ln_gamma_pos(x + y)).exp()
    }
}

/// Unnormalised incomplete beta ∫_0^x s^(a-1) (1-s)^(b-1) ds for 0 <= x <= 1/2.
pub(crate) fn inc_beta_lower<T: Real>(x: T, a: T, b: T) -> T {
    debug_assert!(x >= T::zero() && x <= lit(0.5 + 1e-12));
    if x == T::zero() {
        return T::zero();
    }
    let mut coef = T::one();
    let mut sum = CompensatedSum::new();
    sum.add(T::one() / a);
    for k in 0..2000 {
        let kf: T = from_usize(k);
        coef *= (kf + T::one() - b) / (kf + T::one()) * x;
        let term = coef / (a + kf + T::one());
        sum.add(term);
        if term.abs() <= T::EPS * lit(1e-2) * sum.value().abs() {
            break;
        }
    }
    x.powf(a) * sum.value()
}

/// Arguments of a real Mittag-Leffler evaluation E_{α,β}(x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlQuery<T: Real> {
    alpha: T,
    beta: T,
    x: T,
}

impl<T: Real> MlQuery<T> {
    pub fn new(alpha: T, beta: T, x: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= lit(2.0)) {
            return Err(Error::domain(format!("Mittag-Leffler alpha must lie in (0, 2], got {alpha}")));
        }
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::domain(format!("Mittag-Leffler beta must be positive, got {beta}")));
        }
        if !x.is_finite() {
            return Err(Error::domain("Mittag-Leffler argument must be finite"));
        }
        Ok(Self { alpha, beta, x })
    }

    /// One-parameter function E_α(x) = E_{α,1}(x).
    pub fn one_param(alpha: T, x: T) -> Result<Self> {
        Self::new(alpha, T::one(), x)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn x(&self) -> T {
        self.x
    }
}

/// E_{α,β}(x) with the default absolute tolerance.
pub fn mittag_leffler<T: Real>(q: &MlQuery<T>) -> T {
    mittag_leffler_with_tol(q, lit(ML_ABS_TOL))
}

pub fn mittag_leffler_with_tol<T: Real>(q: &MlQuery<T>, tol: T) -> T {
    ml_eval(q.alpha, q.beta, q.x, tol)
}

/// Unchecked E_{α,β}(x); callers guarantee α in (0, 2], β > 0.
pub(crate) fn ml<T: Real>(alpha: T, beta: T, x: T) -> T {
    ml_eval(alpha, beta, x, lit(ML_ABS_TOL))
}

fn ml_eval<T: Real>(alpha: T, beta: T, x: T, tol: T) -> T {
    if x == T::zero() {
        return rgamma(beta);
    }
    if x > T::zero() {
        return series_positive(alpha, beta, x);
    }
    let y = -x;
    if alpha > T::one() || y.powf(T::one() / alpha) <= lit(SERIES_SWITCH) {
        return series_alternating(alpha, beta, x);
    }
    if alpha == T::one() {
        return kummer_negative(beta, y);
    }
    if beta >= T::one() + alpha {
        // E_{α,β}(x) = (E_{α,β-α}(x) - 1/Γ(β-α)) / x
        let lower = ml_eval(alpha, beta - alpha, x, tol * y);
        return (lower - rgamma(beta - alpha)) / x;
    }
    integral_negative(alpha, beta, y, tol)
}

fn series_positive<T: Real>(alpha: T, beta: T, x: T) -> T {
    let lx = x.ln();
    // leading asymptotics exp(x^(1/α)) decide overflow up front
    if x.powf(T::one() / alpha) > T::LN_MAX {
        return T::max_value().unwrap_or(T::one() / T::EPS) * lit(2.0);
    }
    let mut sum = CompensatedSum::new();
    let mut best = T::zero();
    for k in 0..100_000usize {
        let kf: T = from_usize(k);
        let arg = alpha * kf + beta;
        let klx = kf * lx;
        let term =
            if klx < T::LN_MAX - lit(20.0) && arg < lit(170.0) { (klx).exp() * rgamma(arg) } else { (klx - ln_gamma_pos(arg)).exp() };
        sum.add(term);
        best = best.max(term);
        if term < best && term <= T::EPS * lit(1e-3) * sum.value() {
            break;
        }
    }
    sum.value()
}

fn series_alternating<T: Real>(alpha: T, beta: T, x: T) -> T {
    let mut sum = CompensatedSum::new();
    let mut pow = T::one();
    let peak = x.abs().powf(T::one() / alpha) / alpha;
    for k in 0..20_000usize {
        let kf: T = from_usize(k);
        let term = pow * rgamma(alpha * kf + beta);
        sum.add(term);
        if kf > peak + T::one() && term.abs() <= T::EPS * lit(1e-3) * T::one().max(sum.value().abs()) {
            break;
        }
        pow *= x;
        if !pow.is_finite() {
            break;
        }
    }
    sum.value()
}

/// E_{1,β}(-y) through Kummer's transformation of 1F1(1; β; -y).
fn kummer_negative<T: Real>(beta: T, y: T) -> T {
    if beta < T::one() {
        // E_{1,β}(x) = x E_{1,β+1}(x) + 1/Γ(β)
        return -y * kummer_negative(beta + T::one(), y) + rgamma(beta);
    }
    let bm = beta - T::one();
    let mut sum = CompensatedSum::new();
    sum.add(T::one());
    let mut fact = T::one();
    for k in 1..100_000usize {
        let kf: T = from_usize(k);
        fact *= y / kf;
        if bm == T::zero() {
            break;
        }
        let term = fact * bm / (bm + kf);
        sum.add(term);
        if kf > y && term <= T::EPS * lit(1e-3) * sum.value() {
            break;
        }
    }
    // e^{-y} Σ, with the exponential folded into the log to avoid overflow of Σ
    let s = sum.value();
    (s.ln() - y).exp() * rgamma(beta)
}

/// E_{α,β}(-y), 0 < α < 1, β < 1 + α, via the real-axis integral representation
/// E = (1/π) ∫_0^∞ e^{-r} r^{α-β} [r^α sin(π(1-β)) + y sin(π(1-β+α))]
///                 / (r^{2α} + 2 y r^α cos(απ) + y²) dr.
fn integral_negative<T: Real>(alpha: T, beta: T, y: T, tol: T) -> T {
    let pi = T::pi();
    let s1 = (pi * (T::one() - beta)).sin();
    let s2 = (pi * (T::one() - beta + alpha)).sin();
    let c = (alpha * pi).cos();
    let two = lit::<T>(2.0);
    // smooth part ψ(r); the full integrand is r^{α-β} ψ(r)
    let psi = move |r: T| -> T {
        let ra = r.powf(alpha);
        let num = ra * s1 + y * s2;
        let den = ra * ra + two * y * ra * c + y * y;
        (-r).exp() * num / den
    };
    let split = y.powf(T::one() / alpha).min(lit(60.0));
    let qtol = tol * lit(0.1);
    // ρ = r^γ with γ = α - β + 1 > 0 absorbs the endpoint singularity at r = 0
    let gamma_exp = alpha - beta + T::one();
    let inv = T::one() / gamma_exp;
    let left =
        tanh_sinh(|rho: T| if rho <= T::zero() { T::zero() } else { psi(rho.powf(inv)) }, T::zero(), split.powf(gamma_exp), qtol) * inv;
    let right = exp_sinh(|r: T| r.powf(alpha - beta) * psi(r), split, qtol);
    (left + right) / pi
}
