//! Region-of-interest detection and cropping.

use super::{Class, FundusImage, RoiBox, SegmentationMask};
use crate::error::Result;

/// Proposes an ROI box for an image.
pub trait RoiDetector {
    fn detect(&self, image: &FundusImage) -> RoiBox;
}

/// Centers a square box on the centroid of the brightest green pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrightGreenDetector {
    /// Fraction of pixels treated as the bright region.
    pub fraction: f64,
    /// Box side as a fraction of the shorter image dimension.
    pub side_fraction: f64,
}

impl Default for BrightGreenDetector {
    fn default() -> Self {
        BrightGreenDetector {
            fraction: 0.02,
            side_fraction: 0.4,
        }
    }
}

impl BrightGreenDetector {
    fn side(&self, image: &FundusImage) -> usize {
        let short = image.width.min(image.height);
        ((self.side_fraction * short as f64).floor() as usize).clamp(1, short)
    }

    pub(crate) fn centered_on(&self, image: &FundusImage, cx: f64, cy: f64) -> RoiBox {
        let side = self.side(image);
        let place = |c: f64, extent: usize| -> usize {
            let start = (c - side as f64 / 2.0).round().max(0.0) as usize;
            start.min(extent - side)
        };
        RoiBox {
            x: place(cx, image.width),
            y: place(cy, image.height),
            w: side,
            h: side,
        }
    }
}

impl RoiDetector for BrightGreenDetector {
    fn detect(&self, image: &FundusImage) -> RoiBox {
        let n = image.width * image.height;
        let green: Vec<u8> = image.pixels.chunks_exact(3).map(|p| p[1]).collect();
        let (lo, hi) = green
            .iter()
            .fold((u8::MAX, u8::MIN), |(lo, hi), &g| (lo.min(g), hi.max(g)));
        if lo == hi {
            return self.centered_on(image, image.width as f64 / 2.0, image.height as f64 / 2.0);
        }
        let k = ((self.fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| green[b].cmp(&green[a]));
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for &p in &order[..k] {
            sx += (p % image.width) as f64 + 0.5;
            sy += (p / image.width) as f64 + 0.5;
        }
        self.centered_on(image, sx / k as f64, sy / k as f64)
    }
}

pub fn detect_roi(image: &FundusImage, detector: &dyn RoiDetector) -> RoiBox {
    detector.detect(image)
}

/// Source coordinate and blend weight for output index `i` of `out` along an
/// axis covering `len` source pixels from `start`.
fn bilinear_tap(i: usize, out: usize, start: usize, len: usize) -> (usize, usize, f64) {
    let pos = (i as f64 + 0.5) * len as f64 / out as f64 - 0.5;
    let pos = pos.clamp(0.0, (len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    (start + lo, start + hi, pos - lo as f64)
}

fn nearest_tap(i: usize, out: usize, start: usize, len: usize) -> usize {
    start + i * len / out
}

/// Crops `roi` and resamples it to `size`×`size`: bilinear for the image,
/// nearest neighbor for the mask.
pub fn crop_roi(
    image: &FundusImage,
    mask: Option<&SegmentationMask>,
    roi: RoiBox,
    size: usize,
) -> Result<(FundusImage, Option<SegmentationMask>)> {
    roi.validate(image.width, image.height)?;
    if size == 0 {
        return Err(crate::Error::InvalidBox("output size must be positive".into()));
    }
    let mut out = FundusImage::filled(size, size, [0, 0, 0]);
    let xs: Vec<_> = (0..size).map(|i| bilinear_tap(i, size, roi.x, roi.w)).collect();
    for oy in 0..size {
        let (y0, y1, fy) = bilinear_tap(oy, size, roi.y, roi.h);
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let (a, b, c, d) = (
                image.get(x0, y0),
                image.get(x1, y0),
                image.get(x0, y1),
                image.get(x1, y1),
            );
            let mut rgb = [0u8; 3];
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
                let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
                rgb[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.set(ox, oy, rgb);
        }
    }
    let out_mask = match mask {
        None => None,
        Some(m) => {
            if (m.width, m.height) != (image.width, image.height) {
                return Err(crate::Error::dim(
                    "crop_roi",
                    format!(
                        "mask {}x{} vs image {}x{}",
                        m.width, m.height, image.width, image.height
                    ),
                ));
            }
            let mut cropped = SegmentationMask::filled(size, size, Class::Background);
            for oy in 0..size {
                let sy = nearest_tap(oy, size, roi.y, roi.h);
                for ox in 0..size {
                    cropped.set(ox, oy, m.get(nearest_tap(ox, size, roi.x, roi.w), sy));
                }
            }
            Some(cropped)
        }
    };
    Ok((out, out_mask))
}

/// Nearest-neighbor resize of a mask to `width`×`height`.
pub fn resize_mask_nearest(mask: &SegmentationMask, width: usize, height: usize) -> SegmentationMask {
    let mut out = SegmentationMask::filled(width, height, Class::Background);
    for y in 0..height {
        let sy = nearest_tap(y, height, 0, mask.height);
        for x in 0..width {
            out.set(x, y, mask.get(nearest_tap(x, width, 0, mask.width), sy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> FundusImage {
        let mut img = FundusImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, [(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn identity_crop_is_exact() {
        let img = ramp(20, 20);
        let mut mask = SegmentationMask::filled(20, 20, Class::Background);
        mask.set(3, 4, Class::Cup);
        let (out, m) = crop_roi(&img, Some(&mask), RoiBox::full(20, 20), 20).unwrap();
        assert_eq!(out, img);
        assert_eq!(m.unwrap(), mask);
    }

    #[test]
    fn mask_crop_takes_top_left_source() {
        let mut mask = SegmentationMask::filled(4, 4, Class::Background);
        mask.set(2, 2, Class::Cup);
        mask.set(3, 2, Class::Disc);
        let img = FundusImage::filled(4, 4, [1, 2, 3]);
        let roi = RoiBox { x: 2, y: 2, w: 2, h: 2 };
        let (_, m) = crop_roi(&img, Some(&mask), roi, 4).unwrap();
        let m = m.unwrap();
        assert_eq!(m.get(0, 0), Class::Cup);
        assert_eq!(m.get(1, 1), Class::Cup);
        assert_eq!(m.get(2, 0), Class::Disc);
        assert_eq!(m.get(0, 2), Class::Background);
    }

    #[test]
    fn out_of_bounds_box_rejected() {
        let img = FundusImage::filled(10, 10, [0, 0, 0]);
        let roi = RoiBox { x: 5, y: 0, w: 6, h: 4 };
        assert!(matches!(crop_roi(&img, None, roi, 8), Err(crate::Error::InvalidBox(_))));
    }

    #[test]
    fn detector_degenerate_and_bright_spot() {
        let det = BrightGreenDetector::default();
        let flat = FundusImage::filled(100, 80, [0, 0, 0]);
        assert_eq!(
            det.detect(&flat),
            RoiBox {
                x: 34,
                y: 24,
                w: 32,
                h: 32
            }
        );
        let mut img = FundusImage::filled(100, 100, [10, 20, 10]);
        for y in 20..30 {
            for x in 60..80 {
                img.set(x, y, [200, 220, 150]);
            }
        }
        let b = det.detect(&img);
        assert_eq!((b.w, b.h), (40, 40));
        assert_eq!((b.x, b.y), (50, 5));
        let edge = {
            let mut e = FundusImage::filled(5, 5, [0, 0, 0]);
            e.set(0, 0, [0, 255, 0]);
            e
        };
        assert_eq!(det.detect(&edge), RoiBox { x: 0, y: 0, w: 2, h: 2 });
    }
}
