//! Rasters, mask encodings, ROI handling, augmentation, synthetic fundus
//! images and dataset manifests.

mod augment;
mod manifest;
mod mask;
pub mod netpbm;
mod roi;
mod synth;

pub use augment::{apply_op, augment, AugmentConfig, AugmentOp};
pub use manifest::{DatasetManifest, ManifestRecord};
pub use mask::{
    decode_mask, encode_mask, image_to_tensor, mask_to_target, target_to_mask, BACKGROUND_GRAY, CUP_GRAY, DISC_GRAY,
};
pub use roi::{crop_roi, detect_roi, resize_mask_nearest, BrightGreenDetector, RoiDetector};
pub use synth::{render, synth_sample, SynthParams, SynthSample};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FundusImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl FundusImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != 3 * width * height {
            return Err(Error::Contract(format!(
                "RGB buffer of {} bytes does not fit {width}x{height}",
                pixels.len()
            )));
        }
        Ok(FundusImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        FundusImage { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// 8-bit single-channel image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "gray buffer of {} bytes does not fit {width}x{height}",
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Cup,
    Disc,
    Background,
}

/// Per-pixel class map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Class>,
}

impl SegmentationMask {
    pub fn filled(width: usize, height: usize, class: Class) -> Self {
        SegmentationMask {
            width,
            height,
            labels: vec![class; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Class {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: Class) {
        self.labels[y * self.width + x] = class;
    }

    pub fn count(&self, class: Class) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    /// True when no cup pixel touches the background (4-neighborhood) or the
    /// image border, i.e. the cup lies strictly inside the disc.
    pub fn cup_within_disc(&self) -> bool {
        let (w, h) = (self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if self.get(x, y) != Class::Cup {
                    continue;
                }
                if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                    return false;
                }
                let neighbors = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
                if neighbors.iter().any(|&(nx, ny)| self.get(nx, ny) == Class::Background) {
                    return false;
                }
            }
        }
        true
    }
}

/// Axis-aligned box in source pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoiBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl RoiBox {
    pub fn full(width: usize, height: usize) -> Self {
        RoiBox {
            x: 0,
            y: 0,
            w: width,
            h: height,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::InvalidBox(format!("{self:?} has zero extent")));
        }
        let fits = self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height);
        if !fits {
            return Err(Error::InvalidBox(format!("{self:?} exceeds {width}x{height} image")));
        }
        Ok(())
    }

    /// Parses `x,y,w,h`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = [0usize; 4];
        let mut parts = text.split(',');
        let mut offset = 0;
        for slot in &mut fields {
            let part = parts
                .next()
                .ok_or_else(|| Error::parse(offset, "expected four comma-separated integers x,y,w,h"))?;
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::parse(offset, format!("'{}' is not a non-negative integer", part.trim())))?;
            offset += part.len() + 1;
        }
        if parts.next().is_some() {
            return Err(Error::parse(offset, "more than four fields"));
        }
        let [x, y, w, h] = fields;
        if w == 0 || h == 0 {
            return Err(Error::InvalidBox(format!("{text}: width and height must be positive")));
        }
        Ok(RoiBox { x, y, w, h })
    }
}

impl std::fmt::Display for RoiBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}
