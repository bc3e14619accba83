//! Gray-code mask encoding and tensor conversions.

use super::{Class, FundusImage, GrayImage, SegmentationMask};
use crate::tensor::Tensor;

pub const CUP_GRAY: u8 = 0;
pub const DISC_GRAY: u8 = 128;
pub const BACKGROUND_GRAY: u8 = 255;

const CUP_TARGET: f32 = -1.0;
const DISC_TARGET: f32 = 0.0;
const BACKGROUND_TARGET: f32 = 1.0;

/// Maps each gray value to the nearest class code (ties go to disc) and
/// counts how many pixels were not exactly on a code.
pub fn decode_mask(gray: &GrayImage) -> (SegmentationMask, usize) {
    let mut snapped = 0;
    let labels = gray
        .pixels
        .iter()
        .map(|&v| {
            if v != CUP_GRAY && v != DISC_GRAY && v != BACKGROUND_GRAY {
                snapped += 1;
            }
            match v {
                0..=63 => Class::Cup,
                64..=191 => Class::Disc,
                _ => Class::Background,
            }
        })
        .collect();
    let mask = SegmentationMask {
        width: gray.width,
        height: gray.height,
        labels,
    };
    (mask, snapped)
}

pub fn encode_mask(mask: &SegmentationMask) -> GrayImage {
    let pixels = mask
        .labels
        .iter()
        .map(|c| match c {
            Class::Cup => CUP_GRAY,
            Class::Disc => DISC_GRAY,
            Class::Background => BACKGROUND_GRAY,
        })
        .collect();
    GrayImage {
        width: mask.width,
        height: mask.height,
        pixels,
    }
}

/// Single-channel target `[1, H, W]`: cup -1, disc 0, background +1.
pub fn mask_to_target(mask: &SegmentationMask) -> Tensor {
    let data = mask
        .labels
        .iter()
        .map(|c| match c {
            Class::Cup => CUP_TARGET,
            Class::Disc => DISC_TARGET,
            Class::Background => BACKGROUND_TARGET,
        })
        .collect();
    Tensor::new(vec![1, mask.height, mask.width], data).expect("mask dimensions are consistent")
}

/// Thresholds a `[1, H, W]` or `[H, W]` map at -1/3 and +1/3.
pub fn target_to_mask(values: &[f32], width: usize, height: usize) -> SegmentationMask {
    assert_eq!(values.len(), width * height, "map does not match {width}x{height}");
    let labels = values
        .iter()
        .map(|&v| {
            if v < -1.0 / 3.0 {
                Class::Cup
            } else if v > 1.0 / 3.0 {
                Class::Background
            } else {
                Class::Disc
            }
        })
        .collect();
    SegmentationMask { width, height, labels }
}

/// `[3, H, W]` tensor with samples scaled to [-1, 1].
pub fn image_to_tensor(image: &FundusImage) -> Tensor {
    let (w, h) = (image.width, image.height);
    let mut data = vec![0.0f32; 3 * w * h];
    for (p, rgb) in image.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + p] = rgb[c] as f32 / 127.5 - 1.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("image dimensions are consistent")
}
