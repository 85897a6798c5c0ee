use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Elementwise nonlinearity applied after each affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu { alpha: f64 },
    Swish,
    Sigmoid,
    Tanh,
    Linear,
}

#[inline]
fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

impl Activation {
    #[inline]
    pub fn eval<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Elu { alpha } => {
                if x >= S::zero() {
                    x
                } else {
                    S::lit(alpha) * x.exp_m1()
                }
            }
            Activation::Swish => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn grad<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Elu { alpha } => {
                if x >= S::zero() {
                    S::one()
                } else {
                    S::lit(alpha) * x.exp()
                }
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s * (S::one() + x * (S::one() - s))
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (S::one() - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                S::one() - t * t
            }
            Activation::Linear => S::one(),
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Activation::Linear)
    }

    /// Parses `relu`, `elu`, `elu:0.5`, `swish`, `sigmoid`, `tanh`, `linear`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Some(match s.as_str() {
            "relu" => Activation::Relu,
            "elu" => Activation::Elu { alpha: 1.0 },
            "swish" => Activation::Swish,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "linear" => Activation::Linear,
            other => {
                let alpha: f64 = other.strip_prefix("elu:")?.parse().ok()?;
                if !(alpha > 0.0) {
                    return None;
                }
                Activation::Elu { alpha }
            }
        })
    }

    pub fn name(self) -> String {
        match self {
            Activation::Relu => "relu".into(),
            Activation::Elu { alpha } => format!("elu:{alpha}"),
            Activation::Swish => "swish".into(),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::Tanh => "tanh".into(),
            Activation::Linear => "linear".into(),
        }
    }
}
