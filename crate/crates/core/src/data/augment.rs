//! Paired image/mask augmentation: flips, scaling about the center and
//! illumination gain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Class, FundusImage, SegmentationMask};

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub vflip: bool,
    /// Inclusive range for the scale factor, or `None` to disable.
    pub scale: Option<(f64, f64)>,
    /// Inclusive range for the illumination gain, or `None` to disable.
    pub illumination: Option<(f64, f64)>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip: true,
            vflip: true,
            scale: Some((0.9, 1.1)),
            illumination: Some((0.8, 1.2)),
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            hflip: false,
            vflip: false,
            scale: None,
            illumination: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::none()
    }

    /// Draws the concrete operations for one sample. Flips fire with
    /// probability 1/2.
    pub fn sample_ops<R: Rng>(&self, rng: &mut R) -> Vec<AugmentOp> {
        let mut ops = Vec::new();
        if self.hflip && rng.random_bool(0.5) {
            ops.push(AugmentOp::HFlip);
        }
        if self.vflip && rng.random_bool(0.5) {
            ops.push(AugmentOp::VFlip);
        }
        if let Some((lo, hi)) = self.scale {
            ops.push(AugmentOp::Scale(draw(rng, lo, hi)));
        }
        if let Some((lo, hi)) = self.illumination {
            ops.push(AugmentOp::Illumination(draw(rng, lo, hi)));
        }
        ops
    }
}

fn draw<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    HFlip,
    VFlip,
    Scale(f64),
    Illumination(f64),
}

/// Applies `cfg` with randomness drawn from `seed`.
pub fn augment(
    image: &FundusImage,
    mask: &SegmentationMask,
    cfg: &AugmentConfig,
    seed: u64,
) -> (FundusImage, SegmentationMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = (image.clone(), mask.clone());
    for op in cfg.sample_ops(&mut rng) {
        out = apply_op(&out.0, &out.1, op);
    }
    out
}

pub fn apply_op(image: &FundusImage, mask: &SegmentationMask, op: AugmentOp) -> (FundusImage, SegmentationMask) {
    match op {
        AugmentOp::HFlip => remap(image, mask, |x, y, w, _| (w - 1 - x, y)),
        AugmentOp::VFlip => remap(image, mask, |x, y, _, h| (x, h - 1 - y)),
        AugmentOp::Scale(s) => (scale_image(image, s), scale_mask(mask, s)),
        AugmentOp::Illumination(g) => {
            let pixels = image
                .pixels
                .iter()
                .map(|&v| (v as f64 * g).round().clamp(0.0, 255.0) as u8)
                .collect();
            (
                FundusImage {
                    pixels,
                    ..image.clone()
                },
                mask.clone(),
            )
        }
    }
}

fn remap(
    image: &FundusImage,
    mask: &SegmentationMask,
    source: impl Fn(usize, usize, usize, usize) -> (usize, usize),
) -> (FundusImage, SegmentationMask) {
    let mut img = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            let (sx, sy) = source(x, y, image.width, image.height);
            img.set(x, y, image.get(sx, sy));
        }
    }
    let mut m = mask.clone();
    for y in 0..mask.height {
        for x in 0..mask.width {
            let (sx, sy) = source(x, y, mask.width, mask.height);
            m.set(x, y, mask.get(sx, sy));
        }
    }
    (img, m)
}

/// Source coordinate of output index `i` when zooming by `s` about the center.
fn unscale(i: usize, len: usize, s: f64) -> f64 {
    let c = (len as f64 - 1.0) / 2.0;
    (i as f64 - c) / s + c
}

fn scale_image(image: &FundusImage, s: f64) -> FundusImage {
    let (w, h) = (image.width, image.height);
    let mut out = FundusImage::filled(w, h, [0, 0, 0]);
    let sample = |x: isize, y: isize| -> [f64; 3] {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            return [0.0; 3];
        }
        image.get(x as usize, y as usize).map(f64::from)
    };
    for oy in 0..h {
        let sy = unscale(oy, h, s);
        let (y0, fy) = (sy.floor(), sy - sy.floor());
        for ox in 0..w {
            let sx = unscale(ox, w, s);
            let (x0, fx) = (sx.floor(), sx - sx.floor());
            let (x0, y0i) = (x0 as isize, y0 as isize);
            let (a, b) = (sample(x0, y0i), sample(x0 + 1, y0i));
            let (c, d) = (sample(x0, y0i + 1), sample(x0 + 1, y0i + 1));
            let mut rgb = [0u8; 3];
            for ch in 0..3 {
                let top = a[ch] * (1.0 - fx) + b[ch] * fx;
                let bottom = c[ch] * (1.0 - fx) + d[ch] * fx;
                rgb[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.set(ox, oy, rgb);
        }
    }
    out
}

fn scale_mask(mask: &SegmentationMask, s: f64) -> SegmentationMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = SegmentationMask::filled(w, h, Class::Background);
    for oy in 0..h {
        let sy = (unscale(oy, h, s) + 0.5).floor();
        if sy < 0.0 || sy >= h as f64 {
            continue;
        }
        for ox in 0..w {
            let sx = (unscale(ox, w, s) + 0.5).floor();
            if sx >= 0.0 && sx < w as f64 {
                out.set(ox, oy, mask.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (FundusImage, SegmentationMask) {
        let mut img = FundusImage::filled(6, 5, [0, 0, 0]);
        let mut mask = SegmentationMask::filled(6, 5, Class::Background);
        for y in 0..5 {
            for x in 0..6 {
                img.set(x, y, [(x * 40) as u8, (y * 50) as u8, 7]);
            }
        }
        mask.set(1, 1, Class::Cup);
        mask.set(2, 1, Class::Disc);
        (img, mask)
    }

    #[test]
    fn flips_are_involutions() {
        let (img, mask) = sample();
        for op in [AugmentOp::HFlip, AugmentOp::VFlip] {
            let once = apply_op(&img, &mask, op);
            assert_ne!(once.0, img);
            let twice = apply_op(&once.0, &once.1, op);
            assert_eq!(twice, (img.clone(), mask.clone()));
        }
        let (fi, fm) = apply_op(&img, &mask, AugmentOp::HFlip);
        assert_eq!(fi.get(0, 0), img.get(5, 0));
        assert_eq!(fm.get(4, 1), Class::Cup);
    }

    #[test]
    fn illumination_rule() {
        let img = FundusImage::new(2, 1, vec![200, 100, 250, 0, 1, 255]).unwrap();
        let mask = SegmentationMask::filled(2, 1, Class::Disc);
        let (same, m) = apply_op(&img, &mask, AugmentOp::Illumination(1.0));
        assert_eq!(same, img);
        assert_eq!(m, mask);
        let (bright, m) = apply_op(&img, &mask, AugmentOp::Illumination(1.2));
        assert_eq!(bright.pixels, vec![240, 120, 255, 0, 1, 255]);
        assert_eq!(m, mask);
    }

    #[test]
    fn unit_scale_is_identity() {
        let (img, mask) = sample();
        assert_eq!(apply_op(&img, &mask, AugmentOp::Scale(1.0)), (img, mask));
    }

    #[test]
    fn downscale_pads_with_black_and_background() {
        let img = FundusImage::filled(11, 11, [100, 100, 100]);
        let mask = SegmentationMask::filled(11, 11, Class::Disc);
        let (i, m) = apply_op(&img, &mask, AugmentOp::Scale(0.5));
        assert_eq!(i.get(0, 0), [0, 0, 0]);
        assert_eq!(i.get(5, 5), [100, 100, 100]);
        assert_eq!(m.get(0, 0), Class::Background);
        assert_eq!(m.get(5, 5), Class::Disc);
    }

    #[test]
    fn deterministic_per_seed() {
        let (img, mask) = sample();
        let cfg = AugmentConfig::default();
        assert_eq!(augment(&img, &mask, &cfg, 9), augment(&img, &mask, &cfg, 9));
        assert_eq!(augment(&img, &mask, &AugmentConfig::none(), 9), (img, mask));
    }
}
