//! Fixed and adaptive quadrature rules used internally.

use crate::scalar::{lit, CompensatedSum, Real};

/// Gauss-Legendre rule on [0, 1] with `n` nodes.
pub(crate) fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_f64(n);
    (x.into_iter().map(lit).collect(), w.into_iter().map(lit).collect())
}

fn gauss_legendre_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

const DE_MAX_LEVEL: usize = 9;

/// Tanh-sinh quadrature of `f` over [a, b]. Endpoint singularities at `a` are
/// tolerated: nodes near `a` are formed as `a + (b - a) * small` without cancellation.
pub(crate) fn tanh_sinh<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> T {
    let half_pi = T::frac_pi_2();
    let len = b - a;
    let tmax = lit::<T>(4.0);
    let mut eval = |t: T| -> T {
        let u = half_pi * t.sinh();
        let e = (-(u + u).abs()).exp();
        let frac_small = e / (T::one() + e);
        let w = len * (T::pi() * t.cosh()) * e / ((T::one() + e) * (T::one() + e));
        if !w.is_finite() || w == T::zero() {
            return T::zero();
        }
        let x = if t < T::zero() { a + len * frac_small } else { b - len * frac_small };
        if x <= a || x >= b {
            return T::zero();
        }
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            T::zero()
        }
    };
    de_refine(&mut eval, -tmax, tmax, tol)
}

/// Exp-sinh quadrature of `f` over [c, inf).
pub(crate) fn exp_sinh<T: Real, F: FnMut(T) -> T>(mut f: F, c: T, tol: T) -> T {
    let half_pi = T::frac_pi_2();
    let mut eval = |t: T| -> T {
        let u = half_pi * t.sinh();
        if u > lit(700.0) {
            return T::zero();
        }
        let r = u.exp();
        let w = half_pi * t.cosh() * r;
        let v = f(c + r) * w;
        if v.is_finite() {
            v
        } else {
            T::zero()
        }
    };
    de_refine(&mut eval, lit(-4.5), lit(4.0), tol)
}

fn de_refine<T: Real, F: FnMut(T) -> T>(eval: &mut F, tlo: T, thi: T, tol: T) -> T {
    let mut h = T::one();
    let mut acc = CompensatedSum::new();
    let mut t = tlo;
    while t <= thi + lit(1e-12) {
        acc.add(eval(t));
        t += h;
    }
    let mut prev = acc.value() * h;
    for _ in 1..=DE_MAX_LEVEL {
        h *= lit(0.5);
        let mut t = tlo + h;
        while t <= thi {
            acc.add(eval(t));
            t += h + h;
        }
        let cur = acc.value() * h;
        if (cur - prev).abs() <= tol * lit::<T>(0.1) * T::one().max(cur.abs()) {
            return cur;
        }
        prev = cur;
    }
    prev
}
