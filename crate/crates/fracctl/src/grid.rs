use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};
use nalgebra::DVector;

/// Uniform grid t_j = a + j (b - a) / n, j = 0..=n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T: Real> {
    a: T,
    b: T,
    n: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(a: T, b: T, n: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || !(b > a) {
            return Err(Error::input(format!("time grid needs finite a < b, got [{a}, {b}]")));
        }
        if n < 2 {
            return Err(Error::input(format!("time grid needs n >= 2 intervals, got {n}")));
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> T {
        (self.b - self.a) / from_usize(self.n)
    }

    pub fn node(&self, j: usize) -> T {
        if j == self.n {
            self.b
        } else {
            self.a + self.step() * from_usize(j)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.n).map(|j| self.node(j)).collect()
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    /// Trailing sub-grid [t_start, b] sharing this grid's nodes.
    pub fn tail(&self, start: usize) -> Result<Self> {
        if start + 2 > self.n {
            return Err(Error::input(format!("sub-grid from node {start} of {} has fewer than two intervals", self.n)));
        }
        Ok(Self { a: self.node(start), b: self.b, n: self.n - start })
    }

    /// Leading sub-grid [a, t_end].
    pub fn head(&self, end: usize) -> Result<Self> {
        if end < 2 || end > self.n {
            return Err(Error::input(format!("head sub-grid to node {end} of {} is invalid", self.n)));
        }
        Ok(Self { a: self.a, b: self.node(end), n: end })
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.n == other.n
            && (self.a - other.a).abs() <= T::EPS * (T::one() + self.a.abs()) * crate::scalar::lit(16.0)
            && (self.b - other.b).abs() <= T::EPS * (T::one() + self.b.abs()) * crate::scalar::lit(16.0)
    }
}

/// Vector-valued samples on a grid, one per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction<T: Real> {
    grid: TimeGrid<T>,
    values: Vec<DVector<T>>,
}

impl<T: Real> SampledFunction<T> {
    pub fn new(grid: TimeGrid<T>, values: Vec<DVector<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::input(format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        let dim = values[0].len();
        if dim == 0 {
            return Err(Error::input("samples must have dimension >= 1"));
        }
        for (j, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::input(format!("sample {j} has dimension {}, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::input(format!("sample {j} is not finite")));
            }
        }
        Ok(Self { grid, values })
    }

    /// Scalar samples.
    pub fn scalar(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        Self::new(grid, values.into_iter().map(|v| DVector::from_element(1, v)).collect())
    }

    pub fn from_fn<F: FnMut(T) -> DVector<T>>(grid: TimeGrid<T>, mut f: F) -> Result<Self> {
        let values = grid.nodes().into_iter().map(&mut f).collect();
        Self::new(grid, values)
    }

    pub fn scalar_from_fn<F: FnMut(T) -> T>(grid: TimeGrid<T>, mut f: F) -> Result<Self> {
        Self::scalar(grid, grid.nodes().into_iter().map(&mut f).collect())
    }

    pub fn constant(grid: TimeGrid<T>, value: DVector<T>) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[DVector<T>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<DVector<T>> {
        self.values
    }

    pub fn value(&self, j: usize) -> &DVector<T> {
        &self.values[j]
    }

    /// Component `i` at every node.
    pub fn component(&self, i: usize) -> Vec<T> {
        self.values.iter().map(|v| v[i]).collect()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    pub fn map<F: FnMut(&DVector<T>) -> DVector<T>>(&self, f: F) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(f).collect())
    }
}

/// sup_j |f_j - g_j| (Euclidean norm per node).
pub fn sup_distance<T: Real>(f: &[DVector<T>], g: &[DVector<T>]) -> T {
    f.iter().zip(g).fold(T::zero(), |m, (x, y)| m.max((x - y).norm()))
}
