//! Sparse direct solves backed by faer's LU with partial pivoting.
//!
//! The symbolic analysis (fill-reducing ordering, elimination structure) is
//! cached and reused whenever the entry pattern repeats, which is the common
//! case across Newton and SQP iterations.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};

struct Analysis {
    n: usize,
    pattern: Vec<(usize, usize)>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

#[derive(Default)]
pub struct SparseLu {
    cached: Option<Analysis>,
    factor: Option<Lu<usize, f64>>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    fn analyse(n: usize, entries: &[(usize, usize, f64)]) -> Result<Analysis> {
        let pairs: Vec<Pair<usize, usize>> =
            entries.iter().map(|&(r, c, _)| Pair::new(r, c)).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Analysis {
            n,
            pattern: entries.iter().map(|&(r, c, _)| (r, c)).collect(),
            symbolic,
            argsort,
            lu,
        })
    }

    fn pattern_matches(&self, n: usize, entries: &[(usize, usize, f64)]) -> bool {
        match &self.cached {
            Some(a) => {
                a.n == n
                    && a.pattern.len() == entries.len()
                    && a.pattern
                        .iter()
                        .zip(entries)
                        .all(|(&(r, c), &(er, ec, _))| r == er && c == ec)
            }
            None => false,
        }
    }

    /// Factors `A`, given as `(row, col, value)` triplets (duplicates
    /// summed), and keeps the factorization for [`Self::solve_factored`].
    pub fn factor(&mut self, n: usize, entries: &[(usize, usize, f64)]) -> Result<()> {
        self.factor = None;
        if !self.pattern_matches(n, entries) {
            self.cached = Some(Self::analyse(n, entries)?);
        }
        let a = self.cached.as_ref().unwrap();
        let values: Vec<f64> = entries.iter().map(|e| e.2).collect();
        let mat = SparseColMat::new_from_argsort(a.symbolic.clone(), &a.argsort, &values)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = Lu::try_new_with_symbolic(a.lu.clone(), mat.as_ref())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        self.factor = Some(lu);
        Ok(())
    }

    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }

    /// Solves with the most recent factorization.
    pub fn solve_factored(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (Some(lu), Some(a)) = (&self.factor, &self.cached) else {
            return Err(Error::Factorization("no factorization available".into()));
        };
        if rhs.len() != a.n {
            return Err(Error::DimensionMismatch {
                context: "sparse solve rhs",
                expected: a.n,
                actual: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        {
            let col = MatMut::from_column_major_slice_mut(&mut x, a.n, 1);
            lu.solve_in_place_with_conj(Conj::No, col);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Factorization("numerically singular matrix".into()))
        }
    }

    /// Solves `A x = b` where `A` is given as `(row, col, value)` triplets
    /// (duplicates summed).
    pub fn solve(&mut self, n: usize, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sparse solve rhs",
                expected: n,
                actual: rhs.len(),
            });
        }
        self.factor(n, entries)?;
        self.solve_factored(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_and_reuses_symbolic() {
        let mut lu = SparseLu::new();
        let a = [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0)];
        let x = lu.solve(3, &a, &[1.0, 2.0, 4.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((x[2] - 2.0).abs() < 1e-14);

        let b = [(0, 0, 1.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 1.0), (2, 2, 1.0)];
        let y = lu.solve(3, &b, &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(y, vec![5.0, 6.0, 7.0]);
        assert_eq!(lu.solve_factored(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn structurally_singular_is_an_error() {
        let mut lu = SparseLu::new();
        let a = [(0, 0, 1.0), (1, 0, 1.0)];
        assert!(lu.solve(2, &a, &[1.0, 1.0]).is_err());
        assert!(!lu.is_factored() || lu.solve_factored(&[1.0, 1.0]).is_err());
        assert!(SparseLu::new().solve_factored(&[1.0]).is_err());
    }
}
