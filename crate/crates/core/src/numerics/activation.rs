use serde::{Deserialize, Serialize};

/// Pointwise nonlinearities used by the LSTM blocks and dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu { alpha: f64 },
}

impl Activation {
    pub const DEFAULT_LEAKY_ALPHA: f64 = 0.01;

    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            alpha: Self::DEFAULT_LEAKY_ALPHA,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation `x`, given `y = apply(x)`.
    /// The ReLU family uses 0 (or alpha) at exactly zero.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::leaky()),
            other => Err(crate::Error::Parameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// Logistic sigmoid, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(x: f64, kind: Activation) -> f64 {
    kind.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(activation(0.0, Activation::Sigmoid), 0.5);
        assert_eq!(activation(-3.0, Activation::Relu), 0.0);
        // tanh(1) = (e² − 1)/(e² + 1)
        let e2 = std::f64::consts::E * std::f64::consts::E;
        assert!((activation(1.0, Activation::Tanh) - (e2 - 1.0) / (e2 + 1.0)).abs() < 1e-15);
        assert!((activation(1.0, Activation::Tanh) - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!((activation(-2.0, Activation::leaky()) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn saturates_without_nan() {
        for x in [-1e308, -800.0, 800.0, 1e308] {
            let s = sigmoid(x);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
            assert!(x.tanh().is_finite());
        }
    }

    #[test]
    fn monotone_on_grid() {
        let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
        for w in grid.windows(2) {
            assert!(sigmoid(w[1]) > sigmoid(w[0]));
            assert!(w[1].tanh() > w[0].tanh());
            assert!(Activation::Relu.apply(w[0]) >= 0.0);
        }
    }
}
