//! Synthetic fundus images with exact ground-truth masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BrightGreenDetector, Class, FundusImage, RoiBox, SegmentationMask};
use crate::error::{Error, Result};

/// Smallest supported image side.
pub const MIN_SIZE: usize = 32;

/// Geometry and colors of one synthetic image. Centers are pixel indices;
/// vertical semi-axes are whole pixels so the rasterized vertical diameter is
/// exactly `2 * ry + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub center_x: usize,
    pub center_y: usize,
    pub disc_rx: f64,
    pub disc_ry: usize,
    pub cup_rx: f64,
    pub cup_ry: usize,
    pub background_rgb: [u8; 3],
    pub disc_rgb: [u8; 3],
    pub cup_rgb: [u8; 3],
    /// Amplitude of the uniform per-sample noise.
    pub noise: u8,
    pub texture_phase: (f64, f64),
    pub noise_seed: u64,
}

impl SynthParams {
    /// Vertical cup-to-disc ratio of the ellipses.
    pub fn cdr(&self) -> f64 {
        self.cup_ry as f64 / self.disc_ry as f64
    }

    /// Vertical cup-to-disc ratio as measured on the rasterized mask.
    pub fn raster_cdr(&self) -> f64 {
        (2 * self.cup_ry + 1) as f64 / (2 * self.disc_ry + 1) as f64
    }

    fn validate(&self, size: usize) -> Result<()> {
        let fits = |c: usize, r: f64| c as f64 - r >= 0.0 && c as f64 + r <= (size - 1) as f64;
        if !(fits(self.center_x, self.disc_rx) && fits(self.center_y, self.disc_ry as f64)) {
            return Err(Error::Contract(format!("disc does not fit a {size}x{size} image")));
        }
        if self.cup_ry == 0 || self.cup_rx <= 0.0 || self.cup_ry >= self.disc_ry {
            return Err(Error::Contract("cup must be smaller than the disc".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub image: FundusImage,
    pub mask: SegmentationMask,
    pub roi: RoiBox,
    pub params: SynthParams,
}

fn in_ellipse(dx: f64, dy: f64, rx: f64, ry: f64) -> bool {
    (dx / rx).powi(2) + (dy / ry).powi(2) <= 1.0
}

/// Rasterizes `params` into a `size`×`size` image and mask.
pub fn render(params: &SynthParams, size: usize) -> Result<(FundusImage, SegmentationMask)> {
    if size < MIN_SIZE {
        return Err(Error::Contract(format!("synthetic size {size} is below {MIN_SIZE}")));
    }
    params.validate(size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.noise_seed);
    let mut image = FundusImage::filled(size, size, [0, 0, 0]);
    let mut mask = SegmentationMask::filled(size, size, Class::Background);
    let half = (size as f64 - 1.0) / 2.0;
    let reach = 2.0 * half * half;
    let freq = std::f64::consts::TAU * 3.0 / size as f64;
    let noise = params.noise as i32;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - params.center_x as f64;
            let dy = y as f64 - params.center_y as f64;
            let (class, base, shade) = if in_ellipse(dx, dy, params.cup_rx, params.cup_ry as f64) {
                (Class::Cup, params.cup_rgb, 1.0)
            } else if in_ellipse(dx, dy, params.disc_rx, params.disc_ry as f64) {
                (Class::Disc, params.disc_rgb, 1.0)
            } else {
                let r2 = (x as f64 - half).powi(2) + (y as f64 - half).powi(2);
                let vignette = 1.0 - 0.35 * r2 / reach;
                let texture =
                    (freq * x as f64 + params.texture_phase.0).sin() * (freq * y as f64 + params.texture_phase.1).sin();
                (Class::Background, params.background_rgb, vignette + 0.08 * texture)
            };
            let mut rgb = [0u8; 3];
            for (out, &b) in rgb.iter_mut().zip(base.iter()) {
                let jitter = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
                *out = ((b as f64 * shade).round() as i32 + jitter).clamp(0, 255) as u8;
            }
            image.set(x, y, rgb);
            mask.set(x, y, class);
        }
    }
    if !mask.cup_within_disc() {
        return Err(Error::Contract("cup must lie strictly inside the disc".into()));
    }
    Ok((image, mask))
}

fn channel<R: Rng>(rng: &mut R, lo: u8, hi: u8) -> u8 {
    rng.random_range(lo..=hi)
}

/// Draws parameters from `seed` and renders them.
pub fn synth_sample(seed: u64, size: usize) -> Result<SynthSample> {
    if size < MIN_SIZE {
        return Err(Error::Contract(format!("synthetic size {size} is below {MIN_SIZE}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let spread = (0.15 * s).round() as usize;
    let center_x = rng.random_range(size / 2 - spread..=size / 2 + spread);
    let center_y = rng.random_range(size / 2 - spread..=size / 2 + spread);
    let disc_ry = rng.random_range((0.08 * s).round() as usize..=(0.13 * s).round() as usize);
    let aspect = rng.random_range(0.9..=1.1);
    let disc_rx = disc_ry as f64 * aspect;
    let cup_lo = ((0.35 * disc_ry as f64).round() as usize).max(1);
    let cup_hi = ((0.65 * disc_ry as f64).round() as usize).min(disc_ry - 2);
    let cup_ry = rng.random_range(cup_lo..=cup_hi.max(cup_lo));
    let cup_rx = disc_rx * cup_ry as f64 / disc_ry as f64;
    let background_rgb = [
        channel(&mut rng, 120, 170),
        channel(&mut rng, 40, 70),
        channel(&mut rng, 20, 45),
    ];
    let disc_rgb = [
        channel(&mut rng, 215, 245),
        channel(&mut rng, 150, 180),
        channel(&mut rng, 90, 130),
    ];
    let cup_rgb = [
        channel(&mut rng, 245, 255),
        channel(&mut rng, 210, 235),
        channel(&mut rng, 160, 200),
    ];
    let texture_phase = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let params = SynthParams {
        center_x,
        center_y,
        disc_rx,
        disc_ry,
        cup_rx,
        cup_ry,
        background_rgb,
        disc_rgb,
        cup_rgb,
        noise: 6,
        texture_phase,
        noise_seed: rng.random(),
    };
    let (image, mask) = render(&params, size)?;
    let roi = BrightGreenDetector::default().centered_on(&image, center_x as f64 + 0.5, center_y as f64 + 0.5);
    Ok(SynthSample {
        image,
        mask,
        roi,
        params,
    })
}
