//! Time stepping for Caputo initial-value problems and the right-sided
//! Riemann-Liouville terminal-value problem of the adjoint system.

use crate::error::{Error, Result};
use crate::frac_calc::{check_order, forward_diff_pow, TrapezoidWeights};
use crate::grid::{SampledFunction, TimeGrid};
use crate::scalar::{from_usize, lit, Real};
use crate::special_functions::{gamma_pos, rgamma};
use crate::transition::{check_symmetric, diagonalize, Diagonalization};
use crate::weights::{ProductRule, Var, WeightBank};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A state, control or kernel slice sampled on a grid.
pub type Trajectory<T> = SampledFunction<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// f(y) = c1
    Constant,
    /// f(y) = c1 + c2 exp(-|y|²)
    GaussPlus,
    /// f(y) = c1 + c2 / (1 + |y|²)
    RationalPlus,
}

/// The scalar field f in -A f(y) y, from a fixed catalogue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub kind: FieldKind,
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

impl FieldDescriptor {
    pub fn constant(c: f64) -> Self {
        Self { kind: FieldKind::Constant, c1: c, c2: 0.0 }
    }

    pub fn gauss_plus(c1: f64, c2: f64) -> Self {
        Self { kind: FieldKind::GaussPlus, c1, c2 }
    }

    pub fn rational_plus(c1: f64, c2: f64) -> Self {
        Self { kind: FieldKind::RationalPlus, c1, c2 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c1.is_finite() && self.c2.is_finite() && self.c1 >= 0.0 && self.c2 >= 0.0;
        let positive = match self.kind {
            FieldKind::Constant => self.c1 > 0.0,
            _ => self.c1 + self.c2 > 0.0,
        };
        if ok && positive {
            Ok(())
        } else {
            Err(Error::NonPositiveField(format!("f: {:?} with c1 = {}, c2 = {} is not positive", self.kind, self.c1, self.c2)))
        }
    }

    pub fn eval<T: Real>(&self, y: &DVector<T>) -> T {
        let r2 = y.norm_squared();
        let c1: T = lit(self.c1);
        let c2: T = lit(self.c2);
        match self.kind {
            FieldKind::Constant => c1,
            FieldKind::GaussPlus => c1 + c2 * (-r2).exp(),
            FieldKind::RationalPlus => c1 + c2 / (T::one() + r2),
        }
    }

    /// sup over all y.
    pub fn upper_bound(&self) -> f64 {
        match self.kind {
            FieldKind::Constant => self.c1,
            _ => self.c1 + self.c2,
        }
    }
}

/// Time-dependent coefficient of ᶜD^α x = A(t) x + p(t).
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient<T: Real> {
    /// A g(t) with a constant matrix A and scalar samples g.
    Separable { a: DMatrix<T>, g: SampledFunction<T> },
    /// A(t_j) at every node.
    General(Vec<DMatrix<T>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem<T: Real> {
    coeff: Coefficient<T>,
    forcing: SampledFunction<T>,
    y0: DVector<T>,
}

impl<T: Real> LinearSystem<T> {
    pub fn new(coeff: Coefficient<T>, forcing: SampledFunction<T>, y0: DVector<T>) -> Result<Self> {
        let d = y0.len();
        if forcing.dim() != d {
            return Err(Error::input(format!("forcing has dimension {}, state has {d}", forcing.dim())));
        }
        if y0.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("initial state is not finite"));
        }
        match &coeff {
            Coefficient::Separable { a, g } => {
                if a.nrows() != d || a.ncols() != d {
                    return Err(Error::input(format!("coefficient must be {d}x{d}")));
                }
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(Error::input("coefficient matrix is not finite"));
                }
                if g.dim() != 1 || !g.grid().same_as(forcing.grid()) {
                    return Err(Error::input("g must be scalar and share the forcing grid"));
                }
            }
            Coefficient::General(mats) => {
                if mats.len() != forcing.grid().len() {
                    return Err(Error::input("one coefficient matrix per grid node is required"));
                }
                for (j, m) in mats.iter().enumerate() {
                    if m.nrows() != d || m.ncols() != d || m.iter().any(|x| !x.is_finite()) {
                        return Err(Error::input(format!("coefficient at node {j} is not a finite {d}x{d} matrix")));
                    }
                }
            }
        }
        Ok(Self { coeff, forcing, y0 })
    }

    /// A g(t) x + p with A constant.
    pub fn separable(a: DMatrix<T>, g: SampledFunction<T>, forcing: SampledFunction<T>, y0: DVector<T>) -> Result<Self> {
        Self::new(Coefficient::Separable { a, g }, forcing, y0)
    }

    /// Unforced A g(t) x.
    pub fn homogeneous(a: DMatrix<T>, g: SampledFunction<T>, y0: DVector<T>) -> Result<Self> {
        let zero = SampledFunction::constant(*g.grid(), DVector::zeros(y0.len()))?;
        Self::separable(a, g, zero, y0)
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        self.forcing.grid()
    }

    pub fn coeff(&self) -> &Coefficient<T> {
        &self.coeff
    }

    pub fn forcing(&self) -> &SampledFunction<T> {
        &self.forcing
    }

    pub fn y0(&self) -> &DVector<T> {
        &self.y0
    }
}

/// Predictor-corrector settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PcOptions {
    pub corrector_passes: usize,
}

impl Default for PcOptions {
    fn default() -> Self {
        Self { corrector_passes: 1 }
    }
}

/// Corrector weight of the left end of the interval [t_s, t_s+1] seen from
/// t_(s+m), in the units of [`TrapezoidWeights`].
fn right_cell_weight<T: Real>(m: usize, alpha: T) -> T {
    let mf: T = from_usize(m);
    let m1 = mf - T::one();
    let p = alpha + T::one();
    alpha * (mf.powf(p) - m1.powf(p)) - p * m1 * (mf.powf(alpha) - m1.powf(alpha))
}

/// Fractional Adams-Bashforth-Moulton scheme for ᶜD^α y = L(t_j, y) y + p(t_j, y),
/// where `field(j, y)` returns (L, p) frozen at y. The corrector treats L
/// implicitly, so dissipative systems stay stable for any step size.
/// `jump = (s, δ)` adds δ to the right-hand side on (t_s, t_s+1] only, i.e. a
/// forcing whose right limit at t_s differs from its node value.
fn pc_march<T: Real, F>(
    grid: &TimeGrid<T>,
    y0: &DVector<T>,
    alpha: T,
    opts: PcOptions,
    jump: Option<(usize, &DVector<T>)>,
    mut field: F,
) -> Vec<DVector<T>>
where
    F: FnMut(usize, &DVector<T>) -> (DMatrix<T>, DVector<T>),
{
    let n = grid.n();
    let h = grid.step();
    let d = y0.len();
    let tw = TrapezoidWeights::new(alpha, n);
    let pred_w: Vec<T> = (0..n).map(|d| forward_diff_pow(d, alpha)).collect();
    let c_pred = h.powf(alpha) / gamma_pos(alpha + T::one());
    let c_corr = h.powf(alpha) / gamma_pos(alpha + lit(2.0));
    let eval = |field: &mut F, j: usize, y: &DVector<T>| {
        let (l, p) = field(j, y);
        &l * y + p
    };
    let mut ys = Vec::with_capacity(n + 1);
    let mut fs: Vec<DVector<T>> = Vec::with_capacity(n + 1);
    ys.push(y0.clone());
    fs.push(eval(&mut field, 0, y0));
    for j in 1..=n {
        let mut pred = DVector::zeros(d);
        let mut hist = fs[0].clone() * tw.start(j);
        for k in 0..j {
            pred.axpy(pred_w[j - 1 - k], &fs[k], T::one());
            if k >= 1 {
                hist.axpy(tw.distance(j - k), &fs[k], T::one());
            }
        }
        if let Some((s, delta)) = jump {
            if j > s {
                pred.axpy(pred_w[j - 1 - s], delta, T::one());
                hist.axpy(right_cell_weight(j - s, alpha), delta, T::one());
            }
        }
        let mut y = y0 + pred * c_pred;
        for _ in 0..opts.corrector_passes.max(1) {
            let (l, p) = field(j, &y);
            let rhs = y0 + (&hist + &p) * c_corr;
            let m = DMatrix::identity(d, d) - &l * c_corr;
            y = match m.lu().solve(&rhs) {
                Some(v) if v.iter().all(|x| x.is_finite()) => v,
                _ => y0 + (&hist + &l * &y + p) * c_corr,
            };
        }
        fs.push(eval(&mut field, j, &y));
        ys.push(y);
    }
    ys
}

pub fn solve_caputo_linear<T: Real>(sys: &LinearSystem<T>, alpha: T) -> Result<Trajectory<T>> {
    solve_caputo_linear_with(sys, alpha, PcOptions::default())
}

/// ᶜD^α x = A(t) x + p(t), x(a) = y0. Separable symmetric coefficients are
/// solved componentwise in the eigenbasis of A.
pub fn solve_caputo_linear_with<T: Real>(sys: &LinearSystem<T>, alpha: T, opts: PcOptions) -> Result<Trajectory<T>> {
    check_order(alpha)?;
    let grid = *sys.grid();
    if grid.n() < 8 {
        return Err(Error::input("linear solver needs at least 8 intervals"));
    }
    let p = sys.forcing.values();
    let states = match &sys.coeff {
        Coefficient::Separable { a, g } => match diagonalize(a) {
            Ok(diag) => {
                let gv = g.component(0);
                let lam = diag.eigenvalues().clone();
                let pt: Vec<DVector<T>> = p.iter().map(|v| diag.vec_to_eigen(v)).collect();
                let y0 = diag.vec_to_eigen(&sys.y0);
                let out = pc_march(&grid, &y0, alpha, opts, None, |j, _| (DMatrix::from_diagonal(&(&lam * gv[j])), pt[j].clone()));
                out.iter().map(|v| diag.vec_from_eigen(v)).collect()
            }
            Err(_) => {
                let gv = g.component(0);
                pc_march(&grid, &sys.y0, alpha, opts, None, |j, _| (a * gv[j], p[j].clone()))
            }
        },
        Coefficient::General(mats) => pc_march(&grid, &sys.y0, alpha, opts, None, |j, _| (mats[j].clone(), p[j].clone())),
    };
    Trajectory::new(grid, states)
}

/// Checks (a1): A symmetric and positive semidefinite.
pub(crate) fn check_dissipative<T: Real>(a: &DMatrix<T>) -> Result<Diagonalization<T>> {
    check_symmetric(a, "A")?;
    let diag = diagonalize(a)?;
    let floor = -lit::<T>(1e-10) * (T::one() + diag.lambda_max());
    if diag.eigenvalues()[0] < floor {
        return Err(Error::input(format!("A must be positive semidefinite, smallest eigenvalue is {}", diag.eigenvalues()[0])));
    }
    Ok(diag)
}

pub fn solve_caputo_nonlinear<T: Real>(
    a: &DMatrix<T>,
    f: &FieldDescriptor,
    y0: &DVector<T>,
    grid: &TimeGrid<T>,
    alpha: T,
) -> Result<Trajectory<T>> {
    solve_caputo_nonlinear_with(a, f, y0, grid, alpha, PcOptions::default())
}

/// ᶜD^α z = -A f(z) z, z(a) = y0.
pub fn solve_caputo_nonlinear_with<T: Real>(
    a: &DMatrix<T>,
    f: &FieldDescriptor,
    y0: &DVector<T>,
    grid: &TimeGrid<T>,
    alpha: T,
    opts: PcOptions,
) -> Result<Trajectory<T>> {
    check_order(alpha)?;
    check_dissipative(a)?;
    f.validate()?;
    if a.nrows() != y0.len() {
        return Err(Error::input(format!("A is {}x{}, y0 has length {}", a.nrows(), a.ncols(), y0.len())));
    }
    let zero = DVector::zeros(y0.len());
    let states = pc_march(grid, y0, alpha, opts, None, |_, z| (a * -f.eval(z), zero.clone()));
    Trajectory::new(*grid, states)
}

/// A control sampled on a grid. With a jump at node s the sample u_s holds
/// on [t_(s-1), t_s] and `right` is the limit from the right at t_s.
///
/// `power_tail` marks a control that is smooth in (b - t)^α rather than in t
/// near the end point, as the controls built from the adjoint are.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseControl<T: Real> {
    pub samples: SampledFunction<T>,
    pub jump: Option<(usize, DVector<T>)>,
    pub power_tail: bool,
}

impl<T: Real> PiecewiseControl<T> {
    pub fn continuous(samples: SampledFunction<T>) -> Self {
        Self { samples, jump: None, power_tail: false }
    }

    pub fn with_jump(samples: SampledFunction<T>, node: usize, right: DVector<T>) -> Result<Self> {
        if node >= samples.grid().n() || right.len() != samples.dim() {
            return Err(Error::input("jump must sit at an interior node with the control dimension"));
        }
        Ok(Self { samples, jump: Some((node, right)), power_tail: false })
    }

    pub fn with_power_tail(mut self) -> Self {
        self.power_tail = true;
        self
    }

    /// Resample on a grid r times finer: linear in t on each cell (from the
    /// right limit across a jump), quadratic in (b - t)^α on the last two cells
    /// of a power tail of order α.
    pub fn refine(&self, r: usize, alpha: T) -> Result<Self> {
        if r == 0 {
            return Err(Error::input("refinement factor must be positive"));
        }
        let g = self.samples.grid();
        let n = g.n();
        let fine = TimeGrid::new(g.a(), g.b(), n * r)?;
        let rf: T = from_usize(r);
        let tail = self.power_tail && n >= 2 && self.jump.as_ref().is_none_or(|(s, _)| *s + 2 < n);
        let mut vals = Vec::with_capacity(n * r + 1);
        for k in 0..n {
            let left = match &self.jump {
                Some((s, right)) if *s == k => right,
                _ => self.samples.value(k),
            };
            let next = self.samples.value(k + 1);
            for i in 0..r {
                if i == 0 {
                    vals.push(self.samples.value(k).clone());
                    continue;
                }
                let th = from_usize::<T>(i) / rf;
                if tail && k + 2 >= n {
                    // σ = (distance to b in steps)^α, nodes at 0, 1, 2 steps
                    let x = from_usize::<T>(n - k) - th;
                    let sig = x.powf(alpha);
                    let (s1, s2) = (T::one(), lit::<T>(2.0).powf(alpha));
                    let l0 = (sig - s1) * (sig - s2) / (s1 * s2);
                    let l1 = sig * (sig - s2) / (s1 * (s1 - s2));
                    let l2 = sig * (sig - s1) / (s2 * (s2 - s1));
                    vals.push(self.samples.value(n) * l0 + self.samples.value(n - 1) * l1 + self.samples.value(n - 2) * l2);
                } else {
                    vals.push(left * (T::one() - th) + next * th);
                }
            }
        }
        vals.push(self.samples.value(n).clone());
        Ok(Self {
            samples: SampledFunction::new(fine, vals)?,
            jump: self.jump.as_ref().map(|(s, v)| (s * r, v.clone())),
            power_tail: self.power_tail,
        })
    }
}

/// Correction to the last node of the trapezoid scheme when the forcing p is
/// quadratic in σ = (b - t)^α on the last two cells instead of linear in t.
fn power_tail_correction<T: Real>(p: &[DVector<T>], h: T, alpha: T) -> DVector<T> {
    let n = p.len() - 1;
    let (pn, p1, p2) = (&p[n], &p[n - 1], &p[n - 2]);
    let one = T::one();
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let ha = h.powf(alpha);
    // ∫_0^{2h} x^(α-1) q(x^α) dx = (1/α) ∫_0^{σ_2} q(σ) dσ, Lagrange on σ = 0, h^α, (2h)^α
    let c = two.powf(alpha);
    let w0 = c / two - c * c / lit(6.0);
    let w1 = c * c * c / (lit::<T>(6.0) * (c - one));
    let w2 = (c * c / three - c / two) / (c - one);
    let exact = (pn * w0 + p1 * w1 + p2 * w2) * (ha / alpha);
    // the same integral with p linear in t on each cell
    let ap = alpha + one;
    let lin = pn * (ha / alpha)
        + (p1 - pn) * (ha / ap)
        + p1 * ((c - one) * ha / alpha)
        + (p2 - p1) * (ha * ((two * c - one) / ap - (c - one) / alpha));
    (exact - lin) * rgamma(alpha)
}

/// ᶜD^α y = -A f(y) y + B u(t), y(a) = y0.
pub fn solve_caputo_forced<T: Real>(
    a: &DMatrix<T>,
    f: &FieldDescriptor,
    b: &DMatrix<T>,
    u: &PiecewiseControl<T>,
    y0: &DVector<T>,
    alpha: T,
    opts: PcOptions,
) -> Result<Trajectory<T>> {
    check_order(alpha)?;
    check_dissipative(a)?;
    f.validate()?;
    let samples = &u.samples;
    if b.nrows() != y0.len() || b.ncols() != samples.dim() || a.nrows() != y0.len() {
        return Err(Error::input(format!("B is {}x{}, expected {}x{}", b.nrows(), b.ncols(), y0.len(), samples.dim())));
    }
    let bu: Vec<DVector<T>> = samples.values().iter().map(|v| b * v).collect();
    let delta = u.jump.as_ref().map(|(s, right)| (*s, b * (right - samples.value(*s))));
    let jump = delta.as_ref().map(|(s, d)| (*s, d));
    let mut states = pc_march(samples.grid(), y0, alpha, opts, jump, |j, y| (a * -f.eval(y), bu[j].clone()));
    let n = samples.grid().n();
    if u.power_tail && n >= 2 && u.jump.as_ref().is_none_or(|(s, _)| *s + 2 < n) {
        // forcing enters the last node linearly, so the quadrature fix is additive
        states[n] += power_tail_correction(&bu, samples.grid().step(), alpha);
    }
    Trajectory::new(*samples.grid(), states)
}

/// Solution of ₜD_b^α z = A g(t) z with ₜI_b^(1-α) z(b) = z_b.
#[derive(Clone, Debug)]
pub struct AdjointSolution<T: Real> {
    alpha: T,
    regularized: SampledFunction<T>,
}

impl<T: Real> AdjointSolution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        self.regularized.grid()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// (b - t)^(1-α) z(t), finite including t = b.
    pub fn regularized(&self) -> &SampledFunction<T> {
        &self.regularized
    }

    /// z(t_j); `None` at the singular terminal node.
    pub fn state(&self, j: usize) -> Option<DVector<T>> {
        let grid = self.grid();
        let n = grid.n();
        if j >= n {
            return None;
        }
        let dist = grid.step() * from_usize(n - j);
        Some(self.regularized.value(j) * dist.powf(self.alpha - T::one()))
    }

    /// States at every node before b.
    pub fn interior_states(&self) -> Vec<DVector<T>> {
        (0..self.grid().n()).filter_map(|j| self.state(j)).collect()
    }

    /// ₜI_b^(1-α) z in the limit t → b, which is Γ(α) w(b) for continuous w.
    pub fn terminal_datum(&self) -> DVector<T> {
        self.regularized.value(self.grid().n()) * gamma_pos(self.alpha)
    }

    /// ₜI_b^(1-α) z at node j < n by product quadrature over [t_j, b].
    pub fn right_integral_at(&self, j: usize) -> DVector<T> {
        let n = self.grid().n();
        assert!(j < n, "node must lie before b");
        let a = self.alpha;
        let w = ProductRule::new(T::one() - a, a, Var::Linear, Var::Power, a).weights(n - j);
        let mut acc = DVector::zeros(self.regularized.dim());
        for (k, wk) in w.iter().enumerate() {
            acc.axpy(*wk, self.regularized.value(j + k), T::one());
        }
        acc * rgamma(T::one() - a)
    }
}

pub fn solve_adjoint_terminal<T: Real>(a: &DMatrix<T>, g: &SampledFunction<T>, z_b: &DVector<T>, alpha: T) -> Result<AdjointSolution<T>> {
    check_order(alpha)?;
    let bank = WeightBank::new(alpha, g.grid().n());
    solve_adjoint_terminal_with(a, g, z_b, alpha, &bank)
}

/// Backward product-integration march for w = (b-t)^(1-α) z in the eigenbasis of A:
/// w(t) = z_b/Γ(α) + (b-t)^(1-α)/Γ(α) ∫_t^b (s-t)^(α-1) (b-s)^(α-1) g(s) A w(s) ds.
pub fn solve_adjoint_terminal_with<T: Real>(
    a: &DMatrix<T>,
    g: &SampledFunction<T>,
    z_b: &DVector<T>,
    alpha: T,
    bank: &Arc<WeightBank<T>>,
) -> Result<AdjointSolution<T>> {
    check_order(alpha)?;
    let grid = *g.grid();
    if g.dim() != 1 {
        return Err(Error::input("g must be scalar-valued"));
    }
    if a.nrows() != z_b.len() {
        return Err(Error::input("terminal datum dimension does not match A"));
    }
    if bank.n() != grid.n() || bank.alpha() != alpha {
        return Err(Error::input("weight bank was built for a different grid or order"));
    }
    let diag = diagonalize(a)?;
    let n = grid.n();
    let d = z_b.len();
    let h = grid.step();
    let gv = g.component(0);
    let c = rgamma(alpha);
    let zt = diag.vec_to_eigen(z_b);
    let mut w = vec![DVector::zeros(d); n + 1];
    let (table, start) = bank.right_layers();
    let s = |m: usize| (h * from_usize(m)).powf(alpha) * c;
    for i in 0..d {
        let lam = diag.eigenvalues()[i];
        let cz = zt[i] * c;
        let mut col = vec![T::zero(); n + 1];
        col[n] = cz;
        // nodes n-1 and n-2 together: the last step uses the extended rule through t_{n-2}
        let (s1, s2) = (s(1) * lam, s(2) * lam);
        let w2 = table.row(2);
        let a11 = T::one() - s1 * start[1] * gv[n - 1];
        let a12 = -s1 * start[0] * gv[n - 2];
        let r1 = cz + s1 * start[2] * gv[n] * col[n];
        let a21 = -s2 * w2[1] * gv[n - 1];
        let a22 = T::one() - s2 * w2[0] * gv[n - 2];
        let r2 = cz + s2 * w2[2] * gv[n] * col[n];
        let det = a11 * a22 - a12 * a21;
        col[n - 1] = (r1 * a22 - a12 * r2) / det;
        col[n - 2] = (a11 * r2 - a21 * r1) / det;
        for k in (0..n.saturating_sub(2)).rev() {
            let m = n - k;
            let row = table.row(m);
            let sm = s(m) * lam;
            let mut acc = T::zero();
            for j in 1..=m {
                acc += row[j] * gv[k + j] * col[k + j];
            }
            col[k] = (cz + sm * acc) / (T::one() - sm * row[0] * gv[k]);
        }
        for k in 0..=n {
            w[k][i] = col[k];
        }
    }
    let values = w.iter().map(|v| diag.vec_from_eigen(v)).collect();
    Ok(AdjointSolution { alpha, regularized: SampledFunction::new(grid, values)? })
}
