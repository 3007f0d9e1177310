use nalgebra::{DMatrix, DVector};

use super::lanczos::SymOp;
use crate::scalar::Real;

/// A(i,j) = (W(i, g_j) + W(j, g_i)) / 2 off the diagonal and 1 on it, where
/// W(i, g) is the weight of point i under hypothesis g. Exact, stored as
/// the N×G weight table; a matvec costs O(N·G).
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix<T: Real> {
    table: DMatrix<T>,
    group: Vec<u32>,
}

impl<T: Real> FactoredMatrix<T> {
    pub fn new(table: DMatrix<T>, group: Vec<u32>) -> Self {
        assert_eq!(table.nrows(), group.len());
        assert!(group.iter().all(|&g| (g as usize) < table.ncols()));
        Self { table, group }
    }

    pub fn n(&self) -> usize {
        self.group.len()
    }

    pub fn groups(&self) -> usize {
        self.table.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return T::one();
        }
        (self.table[(i, self.group[j] as usize)] + self.table[(j, self.group[i] as usize)]) * T::lit(0.5)
    }
}

impl<T: Real> SymOp<T> for FactoredMatrix<T> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &DVector<T>, y: &mut DVector<T>) {
        let mut sums = DVector::zeros(self.groups());
        for (xi, &g) in x.iter().zip(&self.group) {
            sums[g as usize] += *xi;
        }
        let a = &self.table * sums;
        let b = self.table.tr_mul(x);
        let half = T::lit(0.5);
        for i in 0..self.n() {
            let g = self.group[i] as usize;
            y[i] = (a[i] + b[g]) * half + (T::one() - self.table[(i, g)]) * x[i];
        }
    }
}
