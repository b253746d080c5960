use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Output side of an SDXL-conditioned crop.
pub const SDXL_SIDE: u32 = 1024;

/// A square crop window, possibly taken from a resized copy of the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub ratio: f64,
    pub source_w: u32,
    pub source_h: u32,
    /// Image the window is placed in: the source, or its resized copy.
    pub resized_w: u32,
    pub resized_h: u32,
    pub crop_w: u32,
    pub crop_h: u32,
    pub offset_x: u32,
    pub offset_y: u32,
    pub resize_factor: f64,
    /// `(top, left)` in resized pixels, for backbones that condition on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning_coords: Option<(u32, u32)>,
}

impl CropSpec {
    pub fn in_bounds(&self) -> bool {
        self.crop_w >= 1
            && self.crop_h >= 1
            && self.offset_x as u64 + self.crop_w as u64 <= self.resized_w as u64
            && self.offset_y as u64 + self.crop_h as u64 <= self.resized_h as u64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    #[default]
    Plain,
    Sdxl,
}

impl std::str::FromStr for CropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(CropMode::Plain),
            "sdxl" => Ok(CropMode::Sdxl),
            other => Err(Error::InvalidArgument(format!("unknown crop mode '{other}' (plain or sdxl)"))),
        }
    }
}

impl CropMode {
    /// Draws a ratio uniformly from `[ratio_min, ratio_max]` and crops in
    /// this mode.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, w: u32, h: u32, ratio_min: f64, ratio_max: f64) -> Result<CropSpec> {
        match self {
            CropMode::Plain => sample_crop(rng, w, h, ratio_min, ratio_max),
            CropMode::Sdxl => {
                check_ratio_range(ratio_min, ratio_max)?;
                let ratio = draw_ratio(rng, ratio_min, ratio_max);
                sdxl_crop_conditioning(rng, w, h, ratio)
            }
        }
    }
}

fn check_dims(w: u32, h: u32) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!("image size {w}x{h} must be positive")));
    }
    Ok(())
}

fn check_ratio_range(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!("crop ratio range [{lo}, {hi}] must satisfy 0 < min <= max <= 1")));
    }
    Ok(())
}

fn draw_ratio<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

/// Plain random square crop of side `round(ratio * min(w, h))`, placed
/// uniformly over the valid offsets.
pub fn sample_crop<R: Rng + ?Sized>(rng: &mut R, w: u32, h: u32, ratio_min: f64, ratio_max: f64) -> Result<CropSpec> {
    check_dims(w, h)?;
    check_ratio_range(ratio_min, ratio_max)?;
    let ratio = draw_ratio(rng, ratio_min, ratio_max);
    let side = round_half_up(ratio * w.min(h) as f64).clamp(1, w.min(h));
    let offset_x = rng.random_range(0..=w - side);
    let offset_y = rng.random_range(0..=h - side);
    Ok(CropSpec {
        ratio,
        source_w: w,
        source_h: h,
        resized_w: w,
        resized_h: h,
        crop_w: side,
        crop_h: side,
        offset_x,
        offset_y,
        resize_factor: 1.0,
        conditioning_coords: None,
    })
}

/// Upscales the source so a `ratio` crop becomes 1024 pixels, then places a
/// 1024x1024 window uniformly in the resized image. Offsets are drawn after
/// resizing.
pub fn sdxl_crop_conditioning<R: Rng + ?Sized>(rng: &mut R, w: u32, h: u32, ratio: f64) -> Result<CropSpec> {
    check_dims(w, h)?;
    check_ratio_range(ratio, ratio)?;
    let factor = SDXL_SIDE as f64 / (ratio * w.min(h) as f64);
    let resized_w = round_half_up(factor * w as f64).max(SDXL_SIDE);
    let resized_h = round_half_up(factor * h as f64).max(SDXL_SIDE);
    let offset_x = rng.random_range(0..=resized_w - SDXL_SIDE);
    let offset_y = rng.random_range(0..=resized_h - SDXL_SIDE);
    Ok(CropSpec {
        ratio,
        source_w: w,
        source_h: h,
        resized_w,
        resized_h,
        crop_w: SDXL_SIDE,
        crop_h: SDXL_SIDE,
        offset_x,
        offset_y,
        resize_factor: factor,
        conditioning_coords: Some((offset_y, offset_x)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn full_frame_at_ratio_one() {
        let c = sample_crop(&mut rng_from_seed(1), 512, 512, 1.0, 1.0).unwrap();
        assert_eq!((c.crop_w, c.offset_x, c.offset_y), (512, 0, 0));
    }

    #[test]
    fn plain_crop_arithmetic() {
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let c = sample_crop(&mut rng, 512, 512, 0.8, 0.8).unwrap();
            assert_eq!(c.crop_w, 410);
            assert!(c.offset_x <= 102 && c.offset_y <= 102);
            let c = sample_crop(&mut rng, 640, 480, 1.0, 1.0).unwrap();
            assert_eq!(c.crop_w, 480);
            assert!(c.offset_x <= 160);
            assert_eq!(c.offset_y, 0);
        }
    }

    #[test]
    fn sdxl_arithmetic() {
        let mut rng = rng_from_seed(3);
        let c = sdxl_crop_conditioning(&mut rng, 512, 512, 1.0).unwrap();
        assert_eq!((c.resize_factor, c.resized_w, c.offset_x, c.offset_y), (2.0, 1024, 0, 0));
        let c = sdxl_crop_conditioning(&mut rng, 512, 512, 0.8).unwrap();
        assert_eq!((c.resize_factor, c.resized_w, c.resized_h), (2.5, 1280, 1280));
        assert!(c.offset_x <= 256 && c.offset_y <= 256);
        assert_eq!(c.conditioning_coords, Some((c.offset_y, c.offset_x)));
        let c = sdxl_crop_conditioning(&mut rng, 640, 480, 1.0).unwrap();
        assert!((c.resize_factor - 1024.0 / 480.0).abs() < 1e-12);
        assert_eq!((c.resized_w, c.resized_h), (1365, 1024));
        assert!(c.offset_x <= 341);
        assert_eq!(c.offset_y, 0);
    }

    #[test]
    fn bad_inputs() {
        let mut rng = rng_from_seed(4);
        assert!(sample_crop(&mut rng, 0, 10, 0.75, 1.0).is_err());
        assert!(sample_crop(&mut rng, 10, 10, 0.9, 0.8).is_err());
        assert!(sdxl_crop_conditioning(&mut rng, 10, 10, 0.0).is_err());
    }
}
