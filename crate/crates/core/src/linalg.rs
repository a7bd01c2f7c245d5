//! Dense symmetric eigen-decomposition and distance helpers.

use ndarray::{Array1, Array2, ArrayView1};

use crate::scalar::Scalar;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
/// `vectors.column(i)` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

/// Cyclic Jacobi rotations. Deterministic and accurate to a few ulps for the
/// matrix sizes used here (a few hundred rows at most).
pub fn symmetric_eigen<T: Scalar>(matrix: &Array2<T>) -> SymmetricEigen<T> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    let mut a = matrix.clone();
    let mut v = Array2::<T>::eye(n);
    let two = T::of(2.0);
    let eps = T::epsilon();

    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + a[[i, i]] * a[[i, i]];
            for j in i + 1..n {
                off = off + a[[i, j]] * a[[i, j]];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap().then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    SymmetricEigen { values, vectors }
}

/// Flips `vector` so its largest-magnitude entry (first one on ties) is positive.
pub fn orient<T: Scalar>(mut vector: ndarray::ArrayViewMut1<T>) {
    let mut best = 0;
    for i in 1..vector.len() {
        if vector[i].abs() > vector[best].abs() {
            best = i;
        }
    }
    if vector.len() > 0 && vector[best] < T::zero() {
        vector.mapv_inplace(|x| -x);
    }
}

#[inline]
pub fn squared_distance<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// All-pairs squared Euclidean distances between rows.
pub fn pairwise_squared<T: Scalar>(points: &Array2<T>) -> Array2<T> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(points.row(i), points.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}
