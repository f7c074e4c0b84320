use crate::error::{Error, Result};

/// A set of `N` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("point dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values do not split into rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            dim: 1,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Empty("no rows".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has length {} but row 0 has length {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Points picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            data,
            dim: self.dim,
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Points) -> Result<Points> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot pool {}-d and {}-d points",
                self.dim, other.dim
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Points {
            data,
            dim: self.dim,
        })
    }

    /// Applies `map` to every row, producing points of dimension `out_dim`.
    pub fn map_rows(&self, out_dim: usize, mut map: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Points> {
        let mut data = Vec::with_capacity(self.len() * out_dim);
        for row in self.rows() {
            let image = map(row);
            if image.len() != out_dim {
                return Err(Error::Shape(format!(
                    "point map returned {} values, expected {out_dim}",
                    image.len()
                )));
            }
            data.extend(image);
        }
        Points::new(data, out_dim)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
