//! State-transition kernels of ᶜD^α x = A g(t) x from the Peano-Baker series.
//!
//! With A symmetric, A = U diag(λ) Uᵀ and every eigencomponent shares the
//! scalar nested integrals of g. The kernel stores those layers once and
//! combines them with powers of each eigenvalue.

use crate::error::{Error, Result};
use crate::frac_calc::check_order;
use crate::grid::{SampledFunction, TimeGrid};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::special_functions::{ln_gamma_pos, ml, rgamma};
use crate::weights::WeightBank;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Series depth cap.
pub const MAX_TERMS: usize = 200;

pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    m.clone().singular_values().iter().fold(T::zero(), |acc, &s| acc.max(s))
}

/// Fails unless ‖A - Aᵀ‖ <= 1e-10 (1 + ‖A‖).
pub(crate) fn check_symmetric<T: Real>(a: &DMatrix<T>, name: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::input(format!("{name} must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::input(format!("{name} has non-finite entries")));
    }
    let skew = spectral_norm(&(a - a.transpose()));
    if skew > lit::<T>(1e-10) * (T::one() + spectral_norm(a)) {
        return Err(Error::input(format!("{name} symmetric: asymmetry norm {skew} exceeds tolerance")));
    }
    Ok(())
}

/// A = U diag(λ) Uᵀ with ascending eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagonalization<T: Real> {
    u: DMatrix<T>,
    eigenvalues: DVector<T>,
    tol: T,
}

impl<T: Real> Diagonalization<T> {
    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Symmetry tolerance the input was accepted with.
    pub fn tol(&self) -> T {
        self.tol
    }

    /// Largest eigenvalue.
    pub fn lambda(&self) -> T {
        self.eigenvalues[self.dim() - 1]
    }

    /// Largest eigenvalue magnitude.
    pub fn lambda_max(&self) -> T {
        self.eigenvalues.iter().fold(T::zero(), |m, l| m.max(l.abs()))
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.u * DMatrix::from_diagonal(&self.eigenvalues) * self.u.transpose()
    }

    /// Uᵀ M
    pub fn to_eigen(&self, m: &DMatrix<T>) -> DMatrix<T> {
        self.u.tr_mul(m)
    }

    pub fn vec_to_eigen(&self, v: &DVector<T>) -> DVector<T> {
        self.u.tr_mul(v)
    }

    pub fn vec_from_eigen(&self, v: &DVector<T>) -> DVector<T> {
        &self.u * v
    }

    /// U diag(v) Uᵀ
    pub fn from_eigen_diag(&self, v: &DVector<T>) -> DMatrix<T> {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= v[j];
        }
        scaled * self.u.transpose()
    }
}

pub fn diagonalize<T: Real>(a: &DMatrix<T>) -> Result<Diagonalization<T>> {
    check_symmetric(a, "A")?;
    let d = a.nrows();
    if d == 0 {
        return Err(Error::input("A must be at least 1x1"));
    }
    let sym = (a + a.transpose()) * lit::<T>(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).expect("finite eigenvalues"));
    let eigenvalues = DVector::from_fn(d, |i, _| eig.eigenvalues[order[i]]);
    let mut u = DMatrix::zeros(d, d);
    let cut = lit::<T>(1e-12);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        col /= col.norm();
        if let Some(first) = col.iter().find(|x| x.abs() > cut) {
            if *first < T::zero() {
                col.neg_mut();
            }
        }
        u.set_column(k, &col);
    }
    Ok(Diagonalization { u, eigenvalues, tol: lit::<T>(1e-10) * (T::one() + spectral_norm(a)) })
}

/// Σ_{k>depth} x^k max(1/Γ(kα+1), 1/Γ((k+1)α)), the majorant of the dropped terms.
pub(crate) fn majorant_tail(x: f64, alpha: f64, depth: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lx = x.ln();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in depth + 1..depth + 5000 {
        let kf = k as f64;
        let lg = ln_gamma_pos(kf * alpha + 1.0).min(ln_gamma_pos((kf + 1.0) * alpha));
        let term = (kf * lx - lg).exp();
        sum += term;
        if term < prev && term <= 1e-18 * sum {
            break;
        }
        prev = term;
    }
    sum
}

fn majorant_peak(x: f64, alpha: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let lx = x.ln();
    (0..2000)
        .map(|k| {
            let kf = k as f64;
            let lg = ln_gamma_pos(kf * alpha + 1.0).min(ln_gamma_pos((kf + 1.0) * alpha));
            kf * lx - lg
        })
        .fold(f64::NEG_INFINITY, f64::max)
        .exp()
}

/// Next regularized right layer R_k(t_i) = (t_e - t_i)^(1-α) r_k(t_i), terminal index e.
fn next_right_layer<T: Real>(bank: &WeightBank<T>, g: &[T], h: T, prev: &[T]) -> Vec<T> {
    let e = prev.len() - 1;
    let alpha = bank.alpha();
    let c = rgamma(alpha);
    let (table, start) = bank.right_layers();
    let gp: Vec<T> = (0..=e).map(|i| g[i] * prev[i]).collect();
    let mut next = vec![T::zero(); e + 1];
    for i in 0..e {
        let acc = if i + 1 == e && e >= 2 {
            start[0] * gp[e - 2] + start[1] * gp[e - 1] + start[2] * gp[e]
        } else {
            let w = table.row(e - i);
            w.iter().zip(&gp[i..]).fold(T::zero(), |s, (&wj, &v)| s + wj * v)
        };
        next[i] = (h * from_usize(e - i)).powf(alpha) * c * acc;
    }
    next
}

fn right_layers<T: Real>(bank: &WeightBank<T>, g: &[T], h: T, e: usize, depth: usize) -> Vec<Vec<T>> {
    let mut layers = vec![vec![rgamma(bank.alpha()); e + 1]];
    for _ in 0..depth {
        let next = next_right_layer(bank, g, h, layers.last().expect("layer 0 exists"));
        layers.push(next);
    }
    layers
}

/// Next left layer J_k(t_m) = I^α(g J_{k-1})(t_m).
fn next_left_layer<T: Real>(bank: &WeightBank<T>, g: &[T], h: T, prev: &[T]) -> Vec<T> {
    let n = prev.len() - 1;
    let alpha = bank.alpha();
    let c = rgamma(alpha);
    let (table, start) = bank.left_layers();
    let gp: Vec<T> = (0..=n).map(|i| g[i] * prev[i]).collect();
    let mut next = vec![T::zero(); n + 1];
    for (m, slot) in next.iter_mut().enumerate().skip(1) {
        let acc = if m == 1 && n >= 2 {
            start[0] * gp[2] + start[1] * gp[1] + start[2] * gp[0]
        } else {
            let w = table.row(m);
            (0..=m).fold(T::zero(), |s, j| s + w[j] * gp[m - j])
        };
        *slot = (h * from_usize(m)).powf(alpha) * c * acc;
    }
    next
}

fn combine<T: Real>(layers: &[Vec<T>], lambdas: &DVector<T>) -> Vec<DVector<T>> {
    let len = layers[0].len();
    (0..len)
        .map(|j| {
            DVector::from_fn(lambdas.len(), |i, _| {
                // Horner in λ_i
                layers.iter().rev().fold(T::zero(), |acc, layer| acc * lambdas[i] + layer[j])
            })
        })
        .collect()
}

fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Transition kernels Ψ(a, t) and Φ(t, b) of ᶜD^α x = A g(t) x on one grid.
#[derive(Debug)]
pub struct TransitionKernel<T: Real> {
    alpha: T,
    grid: TimeGrid<T>,
    diag: Diagonalization<T>,
    g: Vec<T>,
    bank: Arc<WeightBank<T>>,
    tol: T,
    depth: usize,
    tail_bound: T,
    right: Vec<Vec<T>>,
    left: Vec<Vec<T>>,
    psi_diag: Vec<DVector<T>>,
    phi_diag: Vec<DVector<T>>,
    two_point: Mutex<HashMap<usize, Arc<Vec<DVector<T>>>>>,
}

/// Builds the kernels for the coefficient A g(t) with series tail at most `tol`.
pub fn build_kernels<T: Real>(a: &DMatrix<T>, g: &SampledFunction<T>, alpha: T, tol: T) -> Result<TransitionKernel<T>> {
    let bank = WeightBank::new(alpha, g.grid().n());
    build_kernels_with_bank(a, g, alpha, tol, bank)
}

/// Same as [`build_kernels`], reusing product weights for this order and grid size.
pub fn build_kernels_with_bank<T: Real>(
    a: &DMatrix<T>,
    g: &SampledFunction<T>,
    alpha: T,
    tol: T,
    bank: Arc<WeightBank<T>>,
) -> Result<TransitionKernel<T>> {
    check_order(alpha)?;
    if !(tol > T::zero()) {
        return Err(Error::input(format!("series tolerance must be positive, got {tol}")));
    }
    if g.dim() != 1 {
        return Err(Error::input("g must be scalar-valued"));
    }
    let grid = *g.grid();
    if bank.n() != grid.n() || bank.alpha() != alpha {
        return Err(Error::input("weight bank was built for a different grid or order"));
    }
    let diag = diagonalize(a)?;
    let gv = g.component(0);
    let h = grid.step();
    let m_g = sup(&gv);
    let x = to_f64(diag.lambda_max() * m_g * grid.length().powf(alpha));
    let af = to_f64(alpha);
    let peak = majorant_peak(x, af);
    if peak * f64::EPSILON > 1e-8 {
        return Err(Error::Truncation { tol: to_f64(tol), terms: 0, tail: peak * f64::EPSILON });
    }

    // grow the depth until both the analytic tail and the computed term are below tol
    let tol64 = to_f64(tol);
    let mut depth = 0;
    while majorant_tail(x, af, depth) >= tol64 {
        depth += 1;
        if depth > MAX_TERMS {
            return Err(Error::Truncation { tol: tol64, terms: MAX_TERMS, tail: majorant_tail(x, af, MAX_TERMS) });
        }
    }
    let lam_max = diag.lambda_max();
    let n = grid.n();
    let mut right = vec![vec![rgamma(alpha); n + 1]];
    let mut left = vec![vec![T::one(); n + 1]];
    for _ in 0..depth {
        right.push(next_right_layer(&bank, &gv, h, right.last().expect("layer 0")));
        left.push(next_left_layer(&bank, &gv, h, left.last().expect("layer 0")));
    }
    loop {
        let k = right.len() - 1;
        let term = lam_max.powi(k as i32) * sup(&right[k]).max(sup(&left[k]));
        if k == 0 || term < tol {
            break;
        }
        if k + 1 > MAX_TERMS {
            return Err(Error::Truncation { tol: tol64, terms: MAX_TERMS, tail: to_f64(term) });
        }
        right.push(next_right_layer(&bank, &gv, h, &right[k]));
        left.push(next_left_layer(&bank, &gv, h, &left[k]));
    }
    let depth = right.len() - 1;
    let tail_bound = lit(majorant_tail(x, af, depth));
    let psi_diag = combine(&left, diag.eigenvalues());
    let phi_diag = combine(&right, diag.eigenvalues());
    Ok(TransitionKernel {
        alpha,
        grid,
        diag,
        g: gv,
        bank,
        tol,
        depth,
        tail_bound,
        right,
        left,
        psi_diag,
        phi_diag,
        two_point: Mutex::new(HashMap::new()),
    })
}

impl<T: Real> TransitionKernel<T> {
    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn diag(&self) -> &Diagonalization<T> {
        &self.diag
    }

    pub fn dim(&self) -> usize {
        self.diag.dim()
    }

    pub fn g(&self) -> &[T] {
        &self.g
    }

    pub fn bank(&self) -> &Arc<WeightBank<T>> {
        &self.bank
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    pub fn truncation_depth(&self) -> usize {
        self.depth
    }

    pub fn tail_bound(&self) -> T {
        self.tail_bound
    }

    /// sup |g|
    pub fn g_bound(&self) -> T {
        sup(&self.g)
    }

    /// Scalar layers: left J_k(t_j) and regularized right R_k(t_j).
    pub fn scalar_layers(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.left, &self.right)
    }

    /// Diagonal of Uᵀ Ψ(a, t_j) U.
    pub fn psi_diag(&self, j: usize) -> &DVector<T> {
        &self.psi_diag[j]
    }

    pub fn psi(&self, j: usize) -> DMatrix<T> {
        self.diag.from_eigen_diag(&self.psi_diag[j])
    }

    /// Ψ(a, b)
    pub fn psi_ab(&self) -> DMatrix<T> {
        self.psi(self.grid.n())
    }

    /// Diagonal of Uᵀ (b - t_j)^(1-α) Φ(t_j, b) U, finite up to t = b.
    pub fn phi_regularized_diag(&self, j: usize) -> &DVector<T> {
        &self.phi_diag[j]
    }

    pub fn phi_regularized(&self, j: usize) -> DMatrix<T> {
        self.diag.from_eigen_diag(&self.phi_diag[j])
    }

    /// Φ(t_j, b); singular at j = n.
    pub fn phi(&self, j: usize) -> Option<DMatrix<T>> {
        let n = self.grid.n();
        if j >= n {
            return None;
        }
        let dist = self.grid.step() * from_usize(n - j);
        Some(self.phi_regularized(j) * dist.powf(self.alpha - T::one()))
    }

    /// Diagonal of Uᵀ (t_e - t_i)^(1-α) Φ(t_i, t_e) U for i <= e. Layers for each
    /// terminal index are computed once and cached.
    pub fn phi_two_point_regularized_diag(&self, i: usize, e: usize) -> Result<DVector<T>> {
        let n = self.grid.n();
        if i > e || e > n {
            return Err(Error::input(format!("two-point kernel needs i <= e <= {n}, got ({i}, {e})")));
        }
        if e == n {
            return Ok(self.phi_diag[i].clone());
        }
        let cached = {
            let cache = self.two_point.lock().expect("kernel cache poisoned");
            cache.get(&e).cloned()
        };
        let sums = match cached {
            Some(s) => s,
            None => {
                let layers = right_layers(&self.bank, &self.g, self.grid.step(), e, self.depth);
                let s = Arc::new(combine(&layers, self.diag.eigenvalues()));
                self.two_point.lock().expect("kernel cache poisoned").insert(e, s.clone());
                s
            }
        };
        Ok(sums[i].clone())
    }

    pub fn phi_two_point_regularized(&self, i: usize, e: usize) -> Result<DMatrix<T>> {
        Ok(self.diag.from_eigen_diag(&self.phi_two_point_regularized_diag(i, e)?))
    }

    /// ∫_a^{t_j} Φ(τ, t_j) p(τ) dτ at every node, in the original basis.
    ///
    /// Evaluated as the solution x of x = I^α p + A I^α(g x), which sums the
    /// Peano-Baker series of the forced term in closed form on the grid.
    pub fn forced_response(&self, p: &SampledFunction<T>) -> Result<Vec<DVector<T>>> {
        if !p.grid().same_as(&self.grid) || p.dim() != self.dim() {
            return Err(Error::input("forcing must live on the kernel grid with the state dimension"));
        }
        let n = self.grid.n();
        let d = self.dim();
        let h = self.grid.step();
        let c = rgamma(self.alpha);
        let (table, start) = self.bank.left_layers();
        let pt: Vec<DVector<T>> = p.values().iter().map(|v| self.diag.vec_to_eigen(v)).collect();
        let g = &self.g;
        let mut out = vec![DVector::zeros(d); n + 1];
        for i in 0..d {
            let lam = self.diag.eigenvalues()[i];
            let s = |m: usize| (h * from_usize(m)).powf(self.alpha) * c;
            let mut x = vec![T::zero(); n + 1];
            // x_1 and x_2 together: the first step uses the extended rule through t_2
            let (s1, s2) = (s(1), s(2));
            let w2 = table.row(2);
            let a11 = T::one() - s1 * lam * start[1] * g[1];
            let a12 = -s1 * lam * start[0] * g[2];
            let r1 = s1 * (start[0] * pt[2][i] + start[1] * pt[1][i] + start[2] * (pt[0][i] + lam * g[0] * x[0]));
            let a21 = -s2 * lam * w2[1] * g[1];
            let a22 = T::one() - s2 * lam * w2[0] * g[2];
            let r2 = s2 * (w2[0] * pt[2][i] + w2[1] * pt[1][i] + w2[2] * (pt[0][i] + lam * g[0] * x[0]));
            let det = a11 * a22 - a12 * a21;
            x[1] = (r1 * a22 - a12 * r2) / det;
            x[2] = (a11 * r2 - a21 * r1) / det;
            for m in 3..=n {
                let w = table.row(m);
                let sm = s(m);
                let mut acc = w[0] * pt[m][i];
                for j in 1..=m {
                    acc += w[j] * (pt[m - j][i] + lam * g[m - j] * x[m - j]);
                }
                x[m] = sm * acc / (T::one() - sm * lam * w[0] * g[m]);
            }
            for m in 0..=n {
                out[m][i] = x[m];
            }
        }
        Ok(out.iter().map(|v| self.diag.vec_from_eigen(v)).collect())
    }

    /// ∫_a^b Φ(τ, b) p(τ) dτ with the weakly singular weight treated exactly.
    pub fn forced_at_terminal(&self, p: &SampledFunction<T>) -> Result<DVector<T>> {
        if !p.grid().same_as(&self.grid) || p.dim() != self.dim() {
            return Err(Error::input("forcing must live on the kernel grid with the state dimension"));
        }
        let w = self.bank.terminal();
        let scale = self.grid.length().powf(self.alpha);
        let mut acc = DVector::zeros(self.dim());
        for (j, wj) in w.iter().enumerate() {
            let pt = self.diag.vec_to_eigen(p.value(j));
            acc += pt.component_mul(&self.phi_diag[j]) * *wj;
        }
        Ok(self.diag.vec_from_eigen(&(acc * scale)))
    }

    /// max_i |ₜI_b^(1-α) Φ(t, b)|_{t=b} - 1| in the eigenbasis. For a regularized
    /// kernel F continuous at b the limit equals Γ(α) F(b).
    pub fn terminal_datum_error(&self) -> T {
        let n = self.grid.n();
        let ga = crate::special_functions::gamma_pos(self.alpha);
        self.phi_diag[n].iter().fold(T::zero(), |m, &f| m.max((ga * f - T::one()).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    PsiUpper,
    PsiLower,
    PhiUpper,
    PhiLower,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundViolation<T: Real> {
    pub node: usize,
    pub kind: BoundKind,
    pub value: T,
    pub bound: T,
}

/// Node-wise check of the two-sided kernel envelopes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsRecord<T: Real> {
    /// Largest eigenvalue of -A in the dissipative case, of A otherwise.
    pub lambda: T,
    pub lambda_max: T,
    pub m: T,
    /// -A g with A psd and g >= 0.
    pub dissipative: bool,
    pub psi_norm: Vec<T>,
    /// min_i |Ψ_D,ii(t)|
    pub psi_diag_min: Vec<T>,
    pub phi_norm: Vec<T>,
    pub phi_diag_min: Vec<T>,
    pub psi_lower: T,
    pub psi_upper: T,
    pub phi_lower: T,
    pub phi_upper: T,
    /// Componentwise lower bounds (slack 1e-6, they are attained for constant g)
    /// and the upper bounds (slack 1e-8).
    pub violations: Vec<BoundViolation<T>>,
    /// Nodes where the spectral-norm lower bound fails; informational.
    pub norm_lower_misses: Vec<usize>,
}

pub fn kernel_bounds_report<T: Real>(k: &TransitionKernel<T>) -> BoundsRecord<T> {
    let alpha = k.alpha;
    let eig = k.diag.eigenvalues();
    let psd_tol = lit::<T>(1e-10) * (T::one() + k.diag.lambda_max());
    let dissipative = eig.iter().all(|&l| l <= psd_tol) && k.g.iter().all(|&v| v >= T::zero());
    let m = k.g_bound();
    let lambda_max = k.diag.lambda_max();
    let span = k.grid.length().powf(alpha);
    let (lambda, psi_upper, phi_upper) = if dissipative {
        (-eig[0], T::one(), T::one())
    } else {
        (lambda_max, ml(alpha, T::one(), lambda_max * m * span), ml(alpha, alpha, lambda_max * m * span))
    };
    let psi_lower = ml(alpha, T::one(), -lambda * m * span);
    let phi_lower = ml(alpha, alpha, -lambda * m * span);
    let slack = lit::<T>(1e-8);
    let low_slack = lit::<T>(1e-6);
    let mut violations = Vec::new();
    let mut norm_lower_misses = Vec::new();
    let mut psi_norm = Vec::new();
    let mut psi_diag_min = Vec::new();
    let mut phi_norm = Vec::new();
    let mut phi_diag_min = Vec::new();
    for j in 0..=k.grid.n() {
        let p = &k.psi_diag[j];
        let f = &k.phi_diag[j];
        let pn = p.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let pm = p.iter().fold(T::max_value().unwrap_or(lit(1e300)), |a, v| a.min(v.abs()));
        let fnm = f.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let fm = f.iter().fold(T::max_value().unwrap_or(lit(1e300)), |a, v| a.min(v.abs()));
        let mut flag = |kind, value: T, bound: T, ok: bool| {
            if !ok {
                violations.push(BoundViolation { node: j, kind, value, bound });
            }
        };
        flag(BoundKind::PsiUpper, pn, psi_upper, pn <= psi_upper * (T::one() + slack));
        flag(BoundKind::PsiLower, pm, psi_lower, pm >= psi_lower - low_slack);
        flag(BoundKind::PhiUpper, fnm, phi_upper, fnm <= phi_upper * (T::one() + slack));
        flag(BoundKind::PhiLower, fm, phi_lower, fm >= phi_lower - low_slack);
        if pn < psi_lower - low_slack {
            norm_lower_misses.push(j);
        }
        psi_norm.push(pn);
        psi_diag_min.push(pm);
        phi_norm.push(fnm);
        phi_diag_min.push(fm);
    }
    BoundsRecord {
        lambda,
        lambda_max,
        m,
        dissipative,
        psi_norm,
        psi_diag_min,
        phi_norm,
        phi_diag_min,
        psi_lower,
        psi_upper,
        phi_lower,
        phi_upper,
        violations,
        norm_lower_misses,
    }
}

/// r_{α+} = E_{α,α}(λ_max M (b-a)^α), the growth bound of the regularized adjoint.
pub fn r_alpha_plus<T: Real>(k: &TransitionKernel<T>) -> T {
    ml(k.alpha, k.alpha, k.diag.lambda_max() * k.g_bound() * k.grid.length().powf(k.alpha))
}
