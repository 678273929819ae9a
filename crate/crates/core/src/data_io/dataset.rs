use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KarError, Result};
use crate::scalar::Scalar;

/// Aligned observational samples `(x_i, y_i, z_i)`, one row per sample.
///
/// Immutable after construction; every row is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    x: DMatrix<T>,
    y: DVector<T>,
    z: DMatrix<T>,
    group: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: DMatrix<T>, y: DVector<T>, z: DMatrix<T>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return Err(KarError::invalid(format!(
                "inconsistent sample counts: x {} / y {} / z {}",
                x.nrows(),
                n,
                z.nrows()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(KarError::invalid("x and z need at least one column"));
        }
        let finite = x.iter().chain(y.iter()).chain(z.iter()).all(|v| v.is_finite_value());
        if !finite {
            return Err(KarError::invalid("dataset contains non-finite entries"));
        }
        Ok(Self { x, y, z, group: None })
    }

    /// Convenience constructor for scalar treatment and anchor columns.
    pub fn from_columns(x: &[T], y: &[T], z: &[T]) -> Result<Self> {
        Self::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DVector::from_column_slice(y),
            DMatrix::from_column_slice(z.len(), 1, z),
        )
    }

    pub fn with_group(mut self, group: Vec<String>) -> Result<Self> {
        if group.len() != self.len() {
            return Err(KarError::invalid(format!(
                "group column has {} entries, dataset has {}",
                group.len(),
                self.len()
            )));
        }
        self.group = Some(group);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<T> {
        &self.z
    }

    pub fn group(&self) -> Option<&[String]> {
        self.group.as_deref()
    }

    pub fn x_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn z_dim(&self) -> usize {
        self.z.ncols()
    }

    /// Rows in the given order (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            x: select_rows(&self.x, indices),
            y: DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i])),
            z: select_rows(&self.z, indices),
            group: self
                .group
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Seeded sample of `n` rows without replacement, original order kept.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset<T>> {
        if n > self.len() {
            return Err(KarError::invalid(format!(
                "cannot subsample {n} rows from {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    /// `(rows whose group equals value, all other rows)`, order preserved.
    pub fn split_by_group(&self, value: &str) -> Result<(Dataset<T>, Dataset<T>)> {
        let group = self
            .group
            .as_ref()
            .ok_or_else(|| KarError::invalid("dataset has no group column"))?;
        let (hit, miss): (Vec<usize>, Vec<usize>) = (0..self.len()).partition(|&i| group[i] == value);
        Ok((self.select(&hit), self.select(&miss)))
    }

    /// Rows whose first anchor coordinate is below / at-or-above `threshold`.
    pub fn split_by_anchor(&self, threshold: T) -> (Dataset<T>, Dataset<T>) {
        let (below, above): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|&i| self.z[(i, 0)] < threshold);
        (self.select(&below), self.select(&above))
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |v: &T| U::c(v.to_f64_lossy());
        Dataset {
            x: self.x.map(|v| conv(&v)),
            y: self.y.map(|v| conv(&v)),
            z: self.z.map(|v| conv(&v)),
            group: self.group.clone(),
        }
    }
}

fn select_rows<T: Scalar>(m: &DMatrix<T>, indices: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(indices.len(), m.ncols(), |i, j| m[(indices[i], j)])
}
