//! Product-integration weights for weakly singular integrals on [0, 1].
//!
//! A rule approximates ∫_0^1 x^(p-1) (1-x)^(q-1) φ(x) dx by Σ_j w_j φ(j/m)
//! on `m` uniform panels. φ is interpolated by a quadratic per panel, either
//! in x or in x^α on the left half and in (1-x) or (1-x)^α on the right half.
//! The power variables match the expansions of fractional integrals and of
//! the transition kernels around their singular ends.

use crate::quadrature::gauss_legendre;
use crate::scalar::{from_usize, lit, Real};
use crate::special_functions::{beta_pos, inc_beta_lower};
use std::sync::{Arc, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Var {
    Linear,
    Power,
}

#[derive(Clone, Debug)]
pub(crate) struct ProductRule<T: Real> {
    p: T,
    q: T,
    gamma_left: T,
    gamma_right: T,
    gl: [(Vec<T>, Vec<T>); 3],
}

fn lagrange<T: Real>(nodes: [T; 3], x: T) -> [T; 3] {
    let [a, b, c] = nodes;
    [(x - b) * (x - c) / ((a - b) * (a - c)), (x - a) * (x - c) / ((b - a) * (b - c)), (x - a) * (x - b) / ((c - a) * (c - b))]
}

/// Weights of the quadratic interpolant through `nodes` given moments ∫K ξ^j, j = 0..2.
fn weights_from_moments<T: Real>(nodes: [T; 3], mom: [T; 3]) -> [T; 3] {
    let [a, b, c] = nodes;
    let one = |u: T, v: T, w: T| (mom[2] - (v + w) * mom[1] + v * w * mom[0]) / ((u - v) * (u - w));
    [one(a, b, c), one(b, a, c), one(c, a, b)]
}

impl<T: Real> ProductRule<T> {
    pub fn new(p: T, q: T, left: Var, right: Var, alpha: T) -> Self {
        let pick = |v| if v == Var::Power { alpha } else { T::one() };
        Self { p, q, gamma_left: pick(left), gamma_right: pick(right), gl: [gauss_legendre(5), gauss_legendre(8), gauss_legendre(12)] }
    }

    /// One-panel rule quadratic in the right variable through x = -1, 0, 1.
    /// The node at x = -1 lies outside [0, 1]; the weights are listed in that order.
    pub fn start_extended(&self) -> [T; 3] {
        let (p, q, gr) = (self.p, self.q, self.gamma_right);
        let nodes = [from_usize::<T>(2).powf(gr), T::one(), T::zero()];
        let mom = [0, 1, 2].map(|j| beta_pos(p, q + from_usize::<T>(j) * gr));
        weights_from_moments(nodes, mom)
    }

    /// Weights for nodes j/m, j = 0..=m.
    pub fn weights(&self, m: usize) -> Vec<T> {
        self.weights_cached(m, &PowCache::new(self, m))
    }

    fn weights_cached(&self, m: usize, cache: &PowCache<T>) -> Vec<T> {
        assert!(m >= 1 && cache.len >= m);
        let (p, q) = (self.p, self.q);
        let (gl, gr) = (self.gamma_left, self.gamma_right);
        let mut w = vec![T::zero(); m + 1];
        if m == 1 {
            // linear in the right variable: φ ≈ φ(1) + (φ(0) - φ(1)) (1-x)^gr
            let full = beta_pos(p, q);
            let first = beta_pos(p, q + gr);
            w[0] = first;
            w[1] = full - first;
            return w;
        }
        if m == 2 {
            // one quadratic in the right variable over [0, 1], complete moments
            let nodes = [from_usize::<T>(2).powf(gr), T::one(), T::zero()];
            let mom = [0, 1, 2].map(|j| {
                let jf: T = from_usize(j);
                let half: T = from_usize::<T>(2).recip();
                beta_pos(p, q + jf * gr) / half.powf(jf * gr)
            });
            return weights_from_moments(nodes, mom).to_vec();
        }
        let mf: T = from_usize(m);
        let delta = T::one() / mf;
        let half = m / 2;

        // left end panel, triple (0, 1, 2), exact moments in (x/δ)^gl
        let nodes_l = [T::zero(), T::one(), from_usize::<T>(2).powf(gl)];
        let mom_l = [0, 1, 2].map(|j| {
            let jf: T = from_usize(j);
            inc_beta_lower(delta, p + jf * gl, q) / delta.powf(jf * gl)
        });
        let wl = weights_from_moments(nodes_l, mom_l);
        for i in 0..3 {
            w[i] += wl[i];
        }

        // right end panel, triple (m-2, m-1, m), exact moments in ((1-x)/δ)^gr
        let nodes_r = [T::zero(), T::one(), from_usize::<T>(2).powf(gr)];
        let mom_r = [0, 1, 2].map(|j| {
            let jf: T = from_usize(j);
            inc_beta_lower(delta, q + jf * gr, p) / delta.powf(jf * gr)
        });
        let wr = weights_from_moments(nodes_r, mom_r);
        for i in 0..3 {
            w[m - i] += wr[i];
        }

        let scale = delta.powf(p + q - lit::<T>(2.0)) * delta;
        for k in 1..m - 1 {
            let dist = k.min(m - 1 - k);
            let r = if dist <= 2 {
                2
            } else if dist <= 8 {
                1
            } else {
                0
            };
            let ws = &self.gl[r].1;
            let nr = ws.len();
            // x = δ(k + s), 1 - x = δ(j + 1 - s) with j = m - k - 1
            let xi = k * nr;
            let yi = (m - k - 1) * nr;
            let (xp, yq) = (&cache.x_p[r][xi..xi + nr], &cache.y_q[r][yi..yi + nr]);
            let mut acc = [T::zero(); 3];
            if k < half {
                let nodes = [cache.int_l[k], cache.int_l[k + 1], cache.int_l[k + 2]];
                let xg = &cache.x_g[r][xi..xi + nr];
                for i in 0..nr {
                    let basis = lagrange(nodes, xg[i]);
                    let c = ws[i] * xp[i] * yq[i];
                    for (a, b) in acc.iter_mut().zip(basis) {
                        *a += c * b;
                    }
                }
                for i in 0..3 {
                    w[k + i] += scale * acc[i];
                }
            } else {
                // triple (k-1, k, k+1) measured from the right end
                let nodes = [cache.int_r[m - k + 1], cache.int_r[m - k], cache.int_r[m - k - 1]];
                let yg = &cache.y_g[r][yi..yi + nr];
                for i in 0..nr {
                    let basis = lagrange(nodes, yg[i]);
                    let c = ws[i] * xp[i] * yq[i];
                    for (a, b) in acc.iter_mut().zip(basis) {
                        *a += c * b;
                    }
                }
                for i in 0..3 {
                    w[k - 1 + i] += scale * acc[i];
                }
            }
        }
        w
    }
}

fn pow_or_id<T: Real>(x: T, e: T) -> T {
    if e == T::one() {
        x
    } else if e == T::zero() {
        T::one()
    } else {
        x.powf(e)
    }
}

/// Powers at the Gauss nodes of every panel, in panel units: x = j + s and
/// 1 - x = j + 1 - s. Shared by all panel counts up to `len`.
struct PowCache<T: Real> {
    len: usize,
    x_p: [Vec<T>; 3],
    y_q: [Vec<T>; 3],
    x_g: [Vec<T>; 3],
    y_g: [Vec<T>; 3],
    int_l: Vec<T>,
    int_r: Vec<T>,
}

impl<T: Real> PowCache<T> {
    fn new(rule: &ProductRule<T>, len: usize) -> Self {
        let (pm, qm) = (rule.p - T::one(), rule.q - T::one());
        let table = |e: T, flip: bool| -> [Vec<T>; 3] {
            std::array::from_fn(|r| {
                let xs = &rule.gl[r].0;
                let mut out = Vec::with_capacity(len * xs.len());
                for j in 0..len {
                    let jf: T = from_usize(j);
                    out.extend(xs.iter().map(|&s| pow_or_id(if flip { jf + T::one() - s } else { jf + s }, e)));
                }
                out
            })
        };
        let ints = |e: T| (0..len + 3).map(|j| pow_or_id(from_usize::<T>(j), e)).collect();
        Self {
            len,
            x_p: table(pm, false),
            y_q: table(qm, true),
            x_g: table(rule.gamma_left, false),
            y_g: table(rule.gamma_right, true),
            int_l: ints(rule.gamma_left),
            int_r: ints(rule.gamma_right),
        }
    }
}

/// Weights of one rule for every panel count 1..=n_max, stored row after row.
#[derive(Clone, Debug)]
pub(crate) struct ProductTable<T: Real> {
    offsets: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> ProductTable<T> {
    pub fn build(rule: &ProductRule<T>, n_max: usize) -> Self {
        let mut offsets = Vec::with_capacity(n_max + 1);
        let mut data = Vec::with_capacity((n_max + 1) * (n_max + 4) / 2);
        offsets.push(0);
        let cache = PowCache::new(rule, n_max);
        for m in 1..=n_max {
            data.extend(rule.weights_cached(m, &cache));
            offsets.push(data.len());
        }
        Self { offsets, data }
    }

    pub fn row(&self, m: usize) -> &[T] {
        &self.data[self.offsets[m - 1]..self.offsets[m]]
    }
}

/// Lazily built weights shared by everything working on one grid and order.
#[derive(Debug)]
pub struct WeightBank<T: Real> {
    alpha: T,
    n: usize,
    right_layers: OnceLock<(ProductTable<T>, [T; 3])>,
    left_layers: OnceLock<(ProductTable<T>, [T; 3])>,
    terminal: OnceLock<Vec<T>>,
    initial_adjoint: OnceLock<Vec<T>>,
    regular: OnceLock<Vec<T>>,
}

impl<T: Real> WeightBank<T> {
    pub fn new(alpha: T, n: usize) -> Arc<Self> {
        Arc::new(Self {
            alpha,
            n,
            right_layers: OnceLock::new(),
            left_layers: OnceLock::new(),
            terminal: OnceLock::new(),
            initial_adjoint: OnceLock::new(),
            regular: OnceLock::new(),
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// ∫ x^(α-1) (1-x)^(α-1) φ, all panel counts, plus the extended one-panel
    /// rule. x = 0 is the evaluation point.
    pub(crate) fn right_layers(&self) -> (&ProductTable<T>, &[T; 3]) {
        let (t, s) = self.right_layers.get_or_init(|| {
            let a = self.alpha;
            let rule = ProductRule::new(a, a, Var::Linear, Var::Power, a);
            (ProductTable::build(&rule, self.n), rule.start_extended())
        });
        (t, s)
    }

    /// ∫ x^(α-1) φ, all panel counts, plus the extended one-panel rule.
    /// x = 0 is the evaluation point, x = 1 the start of the interval.
    pub(crate) fn left_layers(&self) -> (&ProductTable<T>, &[T; 3]) {
        let (t, s) = self.left_layers.get_or_init(|| {
            let a = self.alpha;
            let rule = ProductRule::new(a, T::one(), Var::Linear, Var::Power, a);
            (ProductTable::build(&rule, self.n), rule.start_extended())
        });
        (t, s)
    }

    /// ∫ (1-x)^(α-1) φ over the whole grid, singular at the terminal node.
    pub(crate) fn terminal(&self) -> &[T] {
        self.terminal.get_or_init(|| {
            let a = self.alpha;
            ProductRule::new(T::one(), a, Var::Linear, Var::Power, a).weights(self.n)
        })
    }

    /// ∫ x^(-α) (1-x)^(α-1) φ over the whole grid.
    pub(crate) fn initial_adjoint(&self) -> &[T] {
        self.initial_adjoint.get_or_init(|| {
            let a = self.alpha;
            ProductRule::new(T::one() - a, a, Var::Linear, Var::Power, a).weights(self.n)
        })
    }

    /// ∫ φ over the whole grid, quadratic in (1-x)^α near the terminal node.
    pub(crate) fn regular(&self) -> &[T] {
        self.regular.get_or_init(|| {
            let a = self.alpha;
            ProductRule::new(T::one(), T::one(), Var::Linear, Var::Power, a).weights(self.n)
        })
    }
}
