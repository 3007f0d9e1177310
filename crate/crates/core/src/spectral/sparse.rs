use nalgebra::DVector;
use rayon::prelude::*;

use super::lanczos::SymOp;
use crate::scalar::Real;

/// Square compressed-sparse-row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T: Real> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from unordered triplets; duplicates keep the larger value.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, T)>) -> Self {
        triplets.par_sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        triplets.dedup_by(|later, kept| {
            if later.0 == kept.0 && later.1 == kept.1 {
                if later.2 > kept.2 {
                    kept.2 = later.2;
                }
                true
            } else {
                false
            }
        });
        let mut row_ptr = vec![0usize; n + 1];
        for t in &triplets {
            row_ptr[t.0 as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = triplets.iter().map(|t| t.1).collect();
        let vals = triplets.iter().map(|t| t.2).collect();
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }
}

impl<T: Real> SymOp<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        y.as_mut_slice()
            .par_iter_mut()
            .enumerate()
            .with_min_len(256)
            .for_each(|(i, out)| {
                let (cols, vals) = self.row(i);
                let mut s = T::zero();
                for (c, v) in cols.iter().zip(vals) {
                    s += *v * x[*c as usize];
                }
                *out = s;
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sorted_and_deduplicated() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![(2, 0, 1.0), (0, 1, 0.5), (0, 1, 0.7), (1, 1, 2.0), (0, 0, 1.0)],
        );
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), 0.7);
        assert_eq!(m.get(1, 0), 0.0);
        let mut y = DVector::zeros(3);
        m.apply(&DVector::from_vec(vec![1.0, 2.0, 3.0]), &mut y);
        assert_eq!(y.as_slice(), &[1.0 + 1.4, 4.0, 1.0]);
    }
}
