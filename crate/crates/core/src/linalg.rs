//! Dense symmetric positive-definite factorization.

use ndarray::Array2;

use crate::{Error, Result, Scalar};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Array2<T>) -> Result<Self> {
        let (n, m) = a.dim();
        if n != m {
            return Err(Error::InvalidArgument(format!("cholesky of a {n}x{m} matrix")));
        }
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d = d - l[[j, k]] * l[[j, k]];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!("pivot {j} is {d}")));
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s = s - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let l = &self.lower;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - l[[i, k]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
    }
}

pub(crate) fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let chol = Cholesky::new(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = chol.solve(&b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[[i, j]] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-14);
        }
        let l = chol.lower();
        let back = l.dot(&l.t());
        for (u, v) in back.iter().zip(a.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0_f64, 2.0], [2.0, 1.0]];
        assert!(matches!(Cholesky::new(&a), Err(Error::NotPositiveDefinite(_))));
    }
}
