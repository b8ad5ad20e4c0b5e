use super::Matrix;
use crate::scalar::Scalar;

/// Elementwise nonlinearity applied after the linear map of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`. `relu'(0)` is 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
            Activation::Identity => T::one(),
        }
    }

    pub fn apply<T: Scalar>(self, x: &Matrix<T>) -> Matrix<T> {
        x.map(|v| self.eval(v))
    }

    pub fn grad<T: Scalar>(self, x: &Matrix<T>) -> Matrix<T> {
        x.map(|v| self.derivative(v))
    }

    pub fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation '{other}' (relu|sigmoid|identity)")),
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    // split by sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Divides each row by `max(‖row‖₂, eps)`.
pub fn l2_row_normalize<T: Scalar>(x: &Matrix<T>, eps: T) -> Matrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let scale = super::norm2(row).max(eps);
        row.iter_mut().for_each(|v| *v /= scale);
    }
    out
}

/// Backward pass of [`l2_row_normalize`]: maps the upstream gradient on the
/// normalized rows to a gradient on the raw rows `x`.
pub fn l2_row_normalize_backward<T: Scalar>(
    x: &Matrix<T>,
    upstream: &Matrix<T>,
    eps: T,
) -> Matrix<T> {
    let mut out = upstream.clone();
    for i in 0..x.rows() {
        let xr = x.row(i);
        let n = super::norm2(xr);
        let g = out.row_mut(i);
        if n > eps {
            // d(x/‖x‖) = (I − y yᵀ)/‖x‖
            let proj = super::dot(xr, g) / (n * n);
            for (gj, &xj) in g.iter_mut().zip(xr) {
                *gj = (*gj - proj * xj) / n;
            }
        } else {
            g.iter_mut().for_each(|v| *v /= eps);
        }
    }
    out
}
