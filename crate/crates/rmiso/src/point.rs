//! Dense parameter iterates.
//!
//! A [`ParameterPoint`] is the iterate `theta_n`: a dense real matrix with a
//! flattened slice view for vector-style arithmetic. Vector-valued problems
//! use a single-column matrix.

use ndarray::Array2;

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterPoint {
    data: Array2<f64>,
}

impl ParameterPoint {
    pub fn from_matrix(data: Array2<f64>) -> Self {
        // Standard (row-major, contiguous) layout so the flat view is cheap.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        ParameterPoint { data }
    }

    /// Column vector with shape `(len, 1)`.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        ParameterPoint {
            data: Array2::from_shape_vec((n, 1), values).expect("vector shape"),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ParameterPoint {
            data: Array2::zeros((rows, cols)),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }

    /// Flattened row-major view.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParameterPoint) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn dist(&self, other: &ParameterPoint) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &ParameterPoint) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.as_mut_slice() {
            *a *= c;
        }
    }

    pub fn sub(&self, other: &ParameterPoint) -> ParameterPoint {
        debug_assert_eq!(self.shape(), other.shape());
        ParameterPoint {
            data: &self.data - &other.data,
        }
    }

    /// `a * x + b * y`.
    pub fn lin_comb(a: f64, x: &ParameterPoint, b: f64, y: &ParameterPoint) -> ParameterPoint {
        debug_assert_eq!(x.shape(), y.shape());
        let mut out = x.clone();
        out.scale(a);
        out.add_scaled(b, y);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_view_and_norms() {
        let p = ParameterPoint::from_vec(vec![3.0, 4.0]);
        assert_eq!(p.shape(), (2, 1));
        assert_eq!(p.norm(), 5.0);
        let q = ParameterPoint::from_vec(vec![0.0, 0.0]);
        assert_eq!(p.dist(&q), 5.0);
    }

    #[test]
    fn lin_comb_matches_manual() {
        let x = ParameterPoint::from_vec(vec![1.0, 2.0]);
        let y = ParameterPoint::from_vec(vec![-1.0, 0.5]);
        let z = ParameterPoint::lin_comb(2.0, &x, 3.0, &y);
        assert_eq!(z.as_slice(), &[-1.0, 5.5]);
    }
}
