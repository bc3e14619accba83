//! Dice content loss, multi-scale feature-matching loss and their weighted sum.
//!
//! Targets and predictions are single-channel maps in the continuous
//! `[-1, 1]` encoding (see [`crate::data::mask_to_target`]).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::PyramidExtractor;

/// Weight of the dice term in the total loss.
pub const DEFAULT_LAMBDA: f64 = 150.0;
/// Added to every dice denominator.
pub const DEFAULT_SMOOTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub smooth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: DEFAULT_LAMBDA,
            smooth: DEFAULT_SMOOTH,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Contract(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        if !(self.smooth > 0.0 && self.smooth.is_finite()) {
            return Err(Error::Contract(format!(
                "smooth {} must be finite and > 0",
                self.smooth
            )));
        }
        Ok(())
    }
}

/// `2 sum(a*b) / (sum(a^2) + sum(b^2) + smooth)`, in `[-1, 1]`.
pub fn generalized_dice(g: &mut Graph, a: Var, b: Var, smooth: f64) -> Result<Var> {
    g.dice(a, b, smooth)
}

/// `1 - dice(y, yhat)`.
pub fn dice_loss(g: &mut Graph, y: Var, yhat: Var, smooth: f64) -> Result<Var> {
    let d = g.dice(y, yhat, smooth)?;
    g.affine(d, -1.0, 1.0)
}

/// Sum over extractor layers and their channels of `1 - dice` between the
/// features of `(x, y)` and of `(x, yhat)`. Each layer contributes its own
/// channel count.
pub fn mfm_loss<E: PyramidExtractor + ?Sized>(
    g: &mut Graph,
    x: Var,
    y: Var,
    yhat: Var,
    extractor: &mut E,
    smooth: f64,
) -> Result<Var> {
    let truth = extractor.extract_pyramid(g, x, y)?;
    let pred = extractor.extract_pyramid(g, x, yhat)?;
    if truth.layers.len() != pred.layers.len() || truth.layers.is_empty() {
        return Err(Error::Contract("extractor returned mismatched pyramids".into()));
    }
    let mut total: Option<Var> = None;
    for (&ty, &py) in truth.layers.iter().zip(&pred.layers) {
        let channels = g.shape(ty)[1] as f32;
        let per_channel = g.channel_dice(ty, py, smooth)?;
        let s = g.sum(per_channel)?;
        let layer = g.affine(s, -1.0, channels)?;
        total = Some(match total {
            Some(t) => g.add(t, layer)?,
            None => layer,
        });
    }
    Ok(total.expect("non-empty pyramid"))
}

/// The individual loss terms of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub dice: Var,
    pub mfm: Var,
    pub total: Var,
}

/// `mfm + lambda * dice_loss`.
pub fn total_loss<E: PyramidExtractor + ?Sized>(
    g: &mut Graph,
    x: Var,
    y: Var,
    yhat: Var,
    extractor: &mut E,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let dice = dice_loss(g, y, yhat, cfg.smooth)?;
    let mfm = mfm_loss(g, x, y, yhat, extractor, cfg.smooth)?;
    let weighted = g.affine(dice, cfg.lambda as f32, 0.0)?;
    let total = g.add(mfm, weighted)?;
    Ok(LossTerms { dice, mfm, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn dice_value(a: &[f32], b: &[f32]) -> f32 {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![a.len()], a.to_vec()).unwrap());
        let b = g.constant(Tensor::new(vec![b.len()], b.to_vec()).unwrap());
        let d = generalized_dice(&mut g, a, b, DEFAULT_SMOOTH).unwrap();
        g.value(d).item().unwrap()
    }

    fn dice_loss_value(y: &[f32], yhat: &[f32]) -> f32 {
        let mut g = Graph::new();
        let y = g.constant(Tensor::new(vec![y.len()], y.to_vec()).unwrap());
        let p = g.constant(Tensor::new(vec![yhat.len()], yhat.to_vec()).unwrap());
        let l = dice_loss(&mut g, y, p, DEFAULT_SMOOTH).unwrap();
        g.value(l).item().unwrap()
    }

    #[test]
    fn dice_examples() {
        assert!((dice_value(&[0.3, -0.7, 1.0], &[0.3, -0.7, 1.0]) - 1.0).abs() < 1e-5);
        assert_eq!(dice_value(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((dice_value(&[1.0, 1.0], &[1.0, 0.0]) - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn dice_loss_examples() {
        assert!(dice_loss_value(&[1.0, -1.0, 0.5], &[1.0, -1.0, 0.5]).abs() < 1e-5);
        assert_eq!(dice_loss_value(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!((dice_loss_value(&[1.0, 1.0], &[1.0, 0.0]) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn dice_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![3]));
        let b = g.constant(Tensor::zeros(vec![4]));
        assert!(matches!(
            generalized_dice(&mut g, a, b, 1e-6),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig {
            lambda: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            smooth: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(LossConfig::default().lambda, 150.0);
    }
}
