use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order a reference must provide.
pub const REFERENCE_ORDER: usize = 4;

/// Smooth desired link trajectory.
pub trait Reference: Send + Sync {
    fn n(&self) -> usize;

    /// Derivative of the given order (0 = position) at time `t`.
    fn derivative(&self, t: f64, order: usize) -> DVector<f64>;

    fn position(&self, t: f64) -> DVector<f64> {
        self.derivative(t, 0)
    }

    fn velocity(&self, t: f64) -> DVector<f64> {
        self.derivative(t, 1)
    }
}

/// `q_d,i(t) = offset_i + amplitude_i sin(frequency_i t + phase_i)`, with
/// frequency in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidReference {
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phase: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offset: Vec<f64>,
}

impl SinusoidReference {
    /// `sin(t)` on every joint.
    pub fn unit(n: usize) -> Self {
        Self {
            amplitude: vec![1.0; n],
            frequency: vec![1.0; n],
            phase: Vec::new(),
            offset: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |key: &str, v: &[f64], optional: bool| -> Result<()> {
            if (optional && v.is_empty()) || v.len() == n {
                if v.iter().all(|x| x.is_finite()) {
                    return Ok(());
                }
                return Err(Error::param(key, "entries must be finite"));
            }
            Err(Error::param(key, format!("expected {n} entries, got {}", v.len())))
        };
        check("amplitude", &self.amplitude, false)?;
        check("frequency", &self.frequency, false)?;
        check("phase", &self.phase, true)?;
        check("offset", &self.offset, true)
    }
}

impl Reference for SinusoidReference {
    fn n(&self) -> usize {
        self.amplitude.len()
    }

    fn derivative(&self, t: f64, order: usize) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            let w = self.frequency[i];
            let phase = self.phase.get(i).copied().unwrap_or(0.0);
            let arg = w * t + phase + order as f64 * FRAC_PI_2;
            let base = self.amplitude[i] * w.powi(order as i32) * arg.sin();
            if order == 0 {
                base + self.offset.get(i).copied().unwrap_or(0.0)
            } else {
                base
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_are_mutually_consistent() {
        let r = SinusoidReference {
            amplitude: vec![1.0, 0.5],
            frequency: vec![1.0, 2.5],
            phase: vec![0.0, 0.3],
            offset: vec![0.1, -0.2],
        };
        let h = 1e-5;
        for &t in &[0.0, 0.7, 3.1] {
            for k in 0..REFERENCE_ORDER {
                let fd = (r.derivative(t + h, k) - r.derivative(t - h, k)) / (2.0 * h);
                assert!((fd - r.derivative(t, k + 1)).amax() < 1e-7 * 2.5_f64.powi(k as i32 + 2));
            }
        }
    }

    #[test]
    fn unit_is_sine() {
        let r = SinusoidReference::unit(2);
        assert_eq!(r.position(0.5).as_slice(), &[0.5_f64.sin(), 0.5_f64.sin()]);
        assert!((r.velocity(0.5)[0] - 0.5_f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let mut r = SinusoidReference::unit(2);
        assert!(r.validate(2).is_ok());
        r.frequency.pop();
        assert!(matches!(r.validate(2), Err(Error::InvalidParameter { key, .. }) if key == "frequency"));
    }
}
