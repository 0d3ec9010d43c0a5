use num_traits::{Float, One};
use serde::{Deserialize, Serialize};

use crate::losses::LossError;
use crate::scalar::{Real, Scalar};
use crate::scale::{default_steepness, target_up_probability, Boundaries, ScaleConfig};

/// Probability clamp used by [`bce`] unless configured otherwise.
pub const DEFAULT_BCE_EPSILON: f64 = 1e-6;

/// Binary cross-entropy with a continuous target.
///
/// `predicted` is clamped to `[ε, 1 − ε]` first; `epsilon` itself is kept
/// inside `(0, 0.5)`.
pub fn bce<R: Real>(target: R::Base, predicted: R, epsilon: R::Base) -> R {
    let eps = epsilon
        .max(R::Base::epsilon())
        .min(R::Base::lit(0.5) - R::Base::epsilon());
    let p = predicted.clamp_const(eps, R::Base::one() - eps);
    let ln_p = p.ln().expect("p >= eps > 0");
    let ln_q = (-p + R::Base::one()).ln().expect("1 - p >= eps > 0");
    -(ln_p * target + ln_q * (R::Base::one() - target))
}

/// Width and height of one ground-truth box, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSize<T> {
    pub width: T,
    pub height: T,
}

/// Everything the scale loss needs besides the boxes and φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLossSettings<T> {
    pub range: ScaleConfig<T>,
    pub boundaries: Boundaries<T>,
    pub steepness: T,
    pub epsilon: T,
}

impl<T: Scalar> ScaleLossSettings<T> {
    pub fn new(range: ScaleConfig<T>, boundaries: Boundaries<T>) -> Self {
        Self {
            range,
            boundaries,
            steepness: default_steepness(),
            epsilon: T::lit(DEFAULT_BCE_EPSILON),
        }
    }
}

/// Object-level scale loss: BCE between the box's target up-scaling
/// probability and `φ / τ_max`.
pub fn scale_loss_object<R: Real>(
    size: BoxSize<R::Base>,
    phi: R,
    area_ref: R::Base,
    settings: &ScaleLossSettings<R::Base>,
) -> Result<R, LossError> {
    let target = target_up_probability(
        size.width,
        size.height,
        &settings.boundaries,
        area_ref,
        settings.steepness,
    )?;
    Ok(bce(target, phi / settings.range.tau_max(), settings.epsilon))
}

/// One image's boxes together with its predicted scale factor.
#[derive(Debug, Clone, Copy)]
pub struct ImageScaleInput<'a, R: Real> {
    pub boxes: &'a [BoxSize<R::Base>],
    pub phi: R,
    pub area_ref: R::Base,
}

/// Mean over images of the mean object-level loss inside each image.
///
/// Images weigh equally regardless of object count; images without boxes
/// are left out of both averages.
pub fn scale_loss_batch<R: Real>(
    images: &[ImageScaleInput<'_, R>],
    settings: &ScaleLossSettings<R::Base>,
) -> Result<R, LossError> {
    let mut per_image = Vec::with_capacity(images.len());
    for img in images.iter().filter(|i| !i.boxes.is_empty()) {
        let losses = img
            .boxes
            .iter()
            .map(|&b| scale_loss_object(b, img.phi, img.area_ref, settings))
            .collect::<Result<Vec<R>, _>>()?;
        per_image.push(R::mean(&losses).expect("non-empty"));
    }
    R::mean(&per_image).ok_or(LossError::EmptyBatch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use std::f64::consts::LN_2;

    fn settings() -> ScaleLossSettings<f64> {
        ScaleLossSettings::new(
            ScaleConfig::new(0.2, 1.5).unwrap(),
            Boundaries::new(0.1, 0.5).unwrap(),
        )
    }

    #[test]
    fn bce_examples() {
        let e = 1e-6;
        assert!((bce::<f64>(1.0, 1.0, e) - e).abs() < 1e-11);
        assert!((bce::<f64>(0.5, 0.5, e) - LN_2).abs() < 1e-15);
        assert!((bce::<f64>(1.0, 0.5, e) - LN_2).abs() < 1e-15);
        assert!(bce(0.0, 0.0, e) < 2e-6);
        assert!(bce(0.3, f64::NAN, e).is_finite());
    }

    #[test]
    fn bce_minimized_at_target() {
        let t = 0.37;
        let at = bce(t, t, 1e-6);
        for p in [0.1, 0.3, 0.36, 0.38, 0.5, 0.9] {
            assert!(bce(t, p, 1e-6) > at);
        }
    }

    #[test]
    fn object_loss_examples() {
        let s = settings();
        let area_ref = 1e4;
        let tiny = BoxSize { width: 1.0, height: 1.0 };
        let huge = BoxSize { width: 100.0, height: 100.0 };
        let mid = BoxSize { width: 60.0, height: 50.0 }; // 0.3 = midpoint
        let tiny_loss = scale_loss_object(tiny, 1.5, area_ref, &s).unwrap();
        assert!(tiny_loss < 2e-6);
        let huge_loss = scale_loss_object(huge, 1.5, area_ref, &s).unwrap();
        assert!((huge_loss + (1e-6f64).ln()).abs() < 1e-9);
        let mid_loss = scale_loss_object(mid, 0.75, area_ref, &s).unwrap();
        assert!((mid_loss - LN_2).abs() < 1e-12);
    }

    #[test]
    fn object_loss_gradient_sign() {
        let s = settings();
        let tape = Tape::new();
        let phi = tape.var(1.0);
        let small = BoxSize { width: 1.0, height: 1.0 };
        scale_loss_object(small, phi, 1e4, &s).unwrap().backward();
        assert!(phi.grad() < 0.0);
    }

    #[test]
    fn batch_examples() {
        let s = settings();
        let a = [BoxSize { width: 20.0, height: 30.0 }];
        let b = [
            BoxSize { width: 60.0, height: 50.0 },
            BoxSize { width: 80.0, height: 70.0 },
            BoxSize { width: 5.0, height: 9.0 },
        ];
        let one = scale_loss_batch(
            &[ImageScaleInput { boxes: &a, phi: 1.1, area_ref: 1e4 }],
            &s,
        )
        .unwrap();
        assert_eq!(one, scale_loss_object(a[0], 1.1, 1e4, &s).unwrap());

        let mean_a = one;
        let mean_b = b
            .iter()
            .map(|&x| scale_loss_object(x, 0.6, 1e4, &s).unwrap())
            .sum::<f64>()
            / 3.0;
        let two = scale_loss_batch(
            &[
                ImageScaleInput { boxes: &a, phi: 1.1, area_ref: 1e4 },
                ImageScaleInput { boxes: &[], phi: 0.3, area_ref: 1e4 },
                ImageScaleInput { boxes: &b, phi: 0.6, area_ref: 1e4 },
            ],
            &s,
        )
        .unwrap();
        assert!((two - (mean_a + mean_b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let s = settings();
        let r = scale_loss_batch(&[ImageScaleInput { boxes: &[], phi: 1.0, area_ref: 1.0 }], &s);
        assert!(matches!(r, Err(LossError::EmptyBatch)));
        assert!(matches!(scale_loss_batch::<f64>(&[], &s), Err(LossError::EmptyBatch)));
    }
}
