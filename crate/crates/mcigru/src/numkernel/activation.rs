use super::matrix::Matrix;
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Identity,
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn leaky_relu<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

impl Activation {
    #[inline]
    pub fn eval<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(s) => leaky_relu(x, T::lit(s)),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(s) => leaky_relu_grad(x, T::lit(s)),
            Activation::Identity => T::one(),
        }
    }
}

/// Elementwise activation with input validation.
pub fn activation<T: Real>(m: &Matrix<T>, kind: Activation) -> Result<Matrix<T>> {
    m.check_finite("activation input")?;
    Ok(m.map(|x| kind.eval(x)))
}

/// In-place softmax of one slice, with max subtraction.
pub fn softmax_slice<T: Real>(xs: &mut [T]) {
    let max = xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Given softmax output `p` and upstream gradient `dp`, writes the gradient
/// with respect to the logits into `dp`.
pub fn softmax_backward_slice<T: Real>(p: &[T], dp: &mut [T]) {
    let mut inner = T::zero();
    for (&pi, &gi) in p.iter().zip(dp.iter()) {
        inner += pi * gi;
    }
    for (gi, &pi) in dp.iter_mut().zip(p) {
        *gi = pi * (*gi - inner);
    }
}

/// Row-wise softmax. `mask` (row-major, same shape) marks the entries that
/// take part; masked-out entries get weight exactly zero.
pub fn softmax_rows<T: Real>(m: &Matrix<T>, mask: Option<&[bool]>) -> Result<Matrix<T>> {
    m.check_finite("softmax input")?;
    if let Some(mask) = mask {
        if mask.len() != m.len() {
            return Err(Error::Shape(format!(
                "softmax mask has {} entries for a {:?} matrix",
                mask.len(),
                m.shape()
            )));
        }
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let cols = m.cols();
    for i in 0..m.rows() {
        let row = m.row(i);
        match mask {
            None => {
                let o = out.row_mut(i);
                o.copy_from_slice(row);
                softmax_slice(o);
            }
            Some(mask) => {
                let keep = &mask[i * cols..(i + 1) * cols];
                let mut vals: Vec<T> = row
                    .iter()
                    .zip(keep)
                    .filter(|(_, &k)| k)
                    .map(|(&x, _)| x)
                    .collect();
                if vals.is_empty() {
                    return Err(Error::FullyMaskedRow(i));
                }
                softmax_slice(&mut vals);
                let mut it = vals.into_iter();
                for (o, &k) in out.row_mut(i).iter_mut().zip(keep) {
                    if k {
                        *o = it.next().unwrap_or_else(T::zero);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_points() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(Activation::Tanh.eval(0.0f64), 0.0);
        assert_eq!(Activation::LeakyRelu(0.2).eval(-1.0f64), -0.2);
        assert_eq!(Activation::LeakyRelu(0.2).eval(3.0f64), 3.0);
    }

    #[test]
    fn leaky_relu_matches_elementwise_definition() {
        let m = Matrix::row_vector(&[-2.0, -0.5, 0.0, 0.5, 2.0]);
        let y = activation(&m, Activation::LeakyRelu(0.2)).unwrap();
        for (&x, &v) in m.as_slice().iter().zip(y.as_slice()) {
            let oracle = if x < 0.0 { 0.2 * x } else { x };
            assert_eq!(v, oracle);
        }
    }

    #[test]
    fn activation_rejects_non_finite() {
        let m = Matrix::row_vector(&[0.0, f64::INFINITY]);
        let err = activation(&m, Activation::Sigmoid).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1, .. }));
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::<f64>::from_rows(&[vec![2.0, 2.0, 2.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let p = softmax_rows(&m, None).unwrap();
        for j in 0..3 {
            assert!((p[(0, j)] - 1.0 / 3.0).abs() < 1e-15);
        }
        // exp/sum oracle
        let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
        let want = [(1.0f64).exp() / z, (2.0f64).exp() / z, (3.0f64).exp() / z];
        for j in 0..3 {
            assert!((p[(1, j)] - want[j]).abs() < 1e-15);
        }
        assert!((p[(1, 0)] - 0.09003).abs() < 1e-5);
        assert!((p[(1, 1)] - 0.24473).abs() < 1e-5);
        assert!((p[(1, 2)] - 0.66524).abs() < 1e-5);

        let big = softmax_rows(&Matrix::row_vector(&[1000.0, 0.0]), None).unwrap();
        assert_eq!(big[(0, 0)], 1.0);
        assert!(big[(0, 1)] < 1e-300);
    }

    #[test]
    fn masked_softmax() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let mask = [true, false, true, false, false, false];
        assert!(matches!(
            softmax_rows(&m, Some(&mask)),
            Err(Error::FullyMaskedRow(1))
        ));
        let mask = [true, false, true, true, true, true];
        let p = softmax_rows(&m, Some(&mask)).unwrap();
        assert_eq!(p[(0, 1)], 0.0);
        assert_eq!(p[(0, 0)], 0.5);
        assert_eq!(p[(0, 2)], 0.5);
    }

    #[test]
    fn softmax_backward_matches_jacobian() {
        let mut p = vec![0.3f64, -1.2, 2.0];
        softmax_slice(&mut p);
        let g = [0.5, -0.25, 1.5];
        let mut dg = g;
        softmax_backward_slice(&p, &mut dg);
        for i in 0..3 {
            let mut want = 0.0;
            for j in 0..3 {
                let jac = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
                want += jac * g[j];
            }
            assert!((dg[i] - want).abs() < 1e-15);
        }
    }
}
