//! Local response normalization across channels:
//! y_c = x_c / (k + alpha * sum_{c' in window} x_{c'}^2)^beta

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub depth_radius: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        // AlexNet values; the trunk config records them explicitly.
        LrnParams {
            depth_radius: 2,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k <= 0.0 {
            return Err(Error::Config(format!(
                "lrn requires k > 0, got {}",
                self.k
            )));
        }
        Ok(())
    }
}

fn denom_pow<F: Scalar>(x: &[F], base: usize, ch: usize, channels: usize, plane: usize, p: &LrnParams) -> F {
    let lo = ch.saturating_sub(p.depth_radius);
    let hi = (ch + p.depth_radius).min(channels - 1);
    let mut s = F::zero();
    for cc in lo..=hi {
        let v = x[base + cc * plane];
        s = s + v * v;
    }
    c::<F>(p.k) + c::<F>(p.alpha) * s
}

pub fn forward<F: Scalar>(input: &Tensor<F>, p: &LrnParams) -> Result<Tensor<F>> {
    p.validate()?;
    let (channels, h, w) = input.spatial_dims()?;
    let plane = h * w;
    let x = input.data();
    let mut out = vec![F::zero(); x.len()];
    let beta = c::<F>(p.beta);
    for s in 0..plane {
        for ch in 0..channels {
            let d = denom_pow(x, s, ch, channels, plane, p);
            out[s + ch * plane] = x[s + ch * plane] / d.powf(beta);
        }
    }
    Ok(Tensor::from_vec_unchecked(input.shape(), out))
}

pub fn backward<F: Scalar>(input: &Tensor<F>, p: &LrnParams, grad_out: &[F]) -> Vec<F> {
    let (channels, h, w) = input.spatial_dims().expect("checked in forward");
    let plane = h * w;
    let x = input.data();
    let mut gx = vec![F::zero(); x.len()];
    let beta = c::<F>(p.beta);
    let alpha = c::<F>(p.alpha);
    let two = c::<F>(2.0);
    for s in 0..plane {
        for ch in 0..channels {
            let d = denom_pow(x, s, ch, channels, plane, p);
            let d_beta = d.powf(beta);
            let g = grad_out[s + ch * plane];
            // direct term
            gx[s + ch * plane] = gx[s + ch * plane] + g / d_beta;
            // denominator term: every x_e inside the window of channel ch
            let coef = g * x[s + ch * plane] * (-beta) * d.powf(-beta - F::one()) * alpha * two;
            let lo = ch.saturating_sub(p.depth_radius);
            let hi = (ch + p.depth_radius).min(channels - 1);
            for e in lo..=hi {
                gx[s + e * plane] = gx[s + e * plane] + coef * x[s + e * plane];
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_divides_by_k_pow_beta() {
        let p = LrnParams {
            depth_radius: 2,
            alpha: 0.0,
            beta: 0.75,
            k: 2.0,
        };
        let input = Tensor::<f64>::from_vec(&[2, 1, 2], vec![1.0, 2.0, -3.0, 4.0]).unwrap();
        let out = forward(&input, &p).unwrap();
        let scale = 2.0f64.powf(0.75);
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i / scale).abs() < 1e-15);
        }
    }

    #[test]
    fn single_channel_radius_zero_matches_closed_form() {
        // k=1, alpha=1, beta=0.5: y = x / sqrt(1 + x^2)
        let p = LrnParams {
            depth_radius: 0,
            alpha: 1.0,
            beta: 0.5,
            k: 1.0,
        };
        let input = Tensor::<f64>::from_vec(&[1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = forward(&input, &p).unwrap();
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i / (1.0 + i * i).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn non_positive_k_rejected() {
        let p = LrnParams {
            k: 0.0,
            ..LrnParams::default()
        };
        assert!(forward(&Tensor::<f64>::zeros(&[1, 1, 1]), &p).is_err());
    }
}
