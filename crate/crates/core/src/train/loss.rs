use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, NEG_COLUMN, POS_COLUMN};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before the log.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Gbce,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Gbce => "gbce",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bce" => Ok(LossKind::Bce),
            "gbce" => Ok(LossKind::Gbce),
            _ => Err(Error::invalid(format!("unknown loss {s:?} (expected bce or gbce)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps the calibration knob `t` to the positive-term exponent.
///
/// Evaluated as `1 + t (alpha - 1)`, which equals
/// `alpha (t (1 - 1/alpha) + 1/alpha)` and keeps `t = 0` exactly at 1.
pub fn beta_of_t(alpha: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("sampling rate {alpha} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("calibration t = {t} outside [0, 1]")));
    }
    Ok(1.0 + t * (alpha - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRate {
    pub alpha: f64,
    pub beta: f64,
}

impl SamplingRate {
    pub fn new(negatives: usize, pool_size: usize, t: f64) -> Result<Self> {
        if negatives == 0 || pool_size == 0 || negatives > pool_size {
            return Err(Error::invalid(format!(
                "need 1 <= negatives ({negatives}) <= pool size ({pool_size})"
            )));
        }
        let alpha = negatives as f64 / pool_size as f64;
        Ok(SamplingRate {
            alpha,
            beta: beta_of_t(alpha, t)?,
        })
    }
}

/// `-[y beta ln p + (1 - y) ln(1 - p)]` on the clamped probability.
pub fn loss(p_plus: f64, y: bool, beta: f64) -> f64 {
    let p = p_plus.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if y {
        -beta * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn bce(p_plus: f64, y: bool) -> f64 {
    let p = p_plus.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean loss over `[N, 2]` logits and its gradient with respect to them.
/// Rows whose probability sits on a clamp bound get zero gradient.
pub fn batch_loss(logits: &Tensor, labels: &[bool], beta: f64) -> Result<(f64, Tensor)> {
    let n = labels.len();
    if logits.shape() != [n, 2] || n == 0 {
        return Err(Error::Shape {
            op: "batch_loss",
            lhs: logits.shape().to_vec(),
            rhs: vec![n, 2],
        });
    }
    let mut total = 0.0;
    let mut grad = vec![0f32; 2 * n];
    for (i, (row, &y)) in logits.data().chunks(2).zip(labels).enumerate() {
        let z = row[POS_COLUMN] as f64 - row[NEG_COLUMN] as f64;
        let p = sigmoid(z);
        total += loss(p, y, beta);
        if p > P_CLAMP && p < 1.0 - P_CLAMP {
            let dz = if y { -beta * (1.0 - p) } else { p } / n as f64;
            grad[2 * i + POS_COLUMN] = dz as f32;
            grad[2 * i + NEG_COLUMN] = -dz as f32;
        }
    }
    Ok((total / n as f64, Tensor::new([n, 2], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((loss(0.5, true, 1.0) - ln2).abs() < 1e-12);
        assert!((loss(0.5, false, 0.3) - ln2).abs() < 1e-12);
        assert!((loss(0.25, true, 0.5) - ln2).abs() < 1e-12);
        assert!(loss(1.0 - 1e-9, true, 0.7) < 1e-6);
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_of_t(0.3, 0.0).unwrap(), 1.0);
        assert!((beta_of_t(0.3, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((beta_of_t(0.128, 0.75).unwrap() - 0.346).abs() < 1e-3);
        assert!(beta_of_t(0.0, 0.5).is_err());
        assert!(beta_of_t(0.5, 1.5).is_err());
        let r = SamplingRate::new(10, 1000, 0.0).unwrap();
        assert_eq!(r.alpha, 0.01);
        assert!(SamplingRate::new(0, 1000, 0.5).is_err());
        assert!(SamplingRate::new(1001, 1000, 0.5).is_err());
    }

    #[test]
    fn batch_gradient_matches_finite_difference() {
        let logits = Tensor::new([3, 2], vec![0.2, -0.4, 1.0, 0.3, -0.7, 0.9]).unwrap();
        let labels = [true, false, true];
        let beta = 0.4;
        let (_, g) = batch_loss(&logits, &labels, beta).unwrap();
        let h = 1e-3f32;
        for i in 0..6 {
            let mut up = logits.clone();
            up.data_mut()[i] += h;
            let mut dn = logits.clone();
            dn.data_mut()[i] -= h;
            let num = (batch_loss(&up, &labels, beta).unwrap().0 - batch_loss(&dn, &labels, beta).unwrap().0)
                / (2.0 * h as f64);
            assert!((num - g.data()[i] as f64).abs() < 1e-4, "{i}: {num} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("GBCE".parse::<LossKind>().unwrap(), LossKind::Gbce);
        assert!("mse".parse::<LossKind>().is_err());
        assert_eq!(serde_json::to_string(&LossKind::Bce).unwrap(), "\"bce\"");
    }
}
