//! Dense matrix exponential by scaling-and-squaring with a degree-13 Padé
//! approximant (Higham 2005). Accuracy is at machine-precision level for
//! the small, well-scaled matrices the controller feeds in.

use nalgebra::DMatrix;

#[allow(unused_imports)]
use num_traits::Float;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Theta_13 from Higham's error analysis: below this 1-norm no scaling is
/// needed for double precision.
const THETA_13: f64 = 5.371920351148152;

/// Matrix exponential of a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }

    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a / (2.0f64.powi(s as i32));

    let id = DMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let b = &PADE13;
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &id;
    let u = &scaled * u_inner;
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &id;

    // r = (V - U)^-1 (V + U)
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is nonsingular for scaled input");

    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut max = 0.0f64;
    for j in 0..a.ncols() {
        let mut sum = 0.0;
        for i in 0..a.nrows() {
            sum += a[(i, j)].abs();
        }
        max = max.max(sum);
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::zeros(4, 4);
        let e = expm(&z);
        assert_relative_eq!(e, DMatrix::identity(4, 4), epsilon = 1e-15);
    }

    #[test]
    fn exp_of_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![
            -1.0, 0.5, 2.0
        ]));
        let e = expm(&d);
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 1)], 0.5f64.exp(), epsilon = 1e-13);
        assert_relative_eq!(e[(2, 2)], 2.0f64.exp(), epsilon = 1e-12);
        assert_relative_eq!(e[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_of_nilpotent_block() {
        // [[0, 1], [0, 0]] exponentiates to [[1, 1], [0, 1]]
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(e[(0, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(e[(1, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn semigroup_property() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.2, -1.3, 0.4, 0.9, -0.1, 0.7, -0.5, 0.3, -0.8],
        );
        let e1 = expm(&a);
        let e2 = expm(&(&a * 2.0));
        assert_relative_eq!(&e1 * &e1, e2, epsilon = 1e-11);
    }

    #[test]
    fn matches_taylor_series_for_small_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.01, 0.03, -0.02, 0.04]);
        let mut series = DMatrix::identity(2, 2);
        let mut term = DMatrix::identity(2, 2);
        for k in 1..20 {
            term = &term * &a / k as f64;
            series += &term;
        }
        assert_relative_eq!(expm(&a), series, epsilon = 1e-14);
    }
}
