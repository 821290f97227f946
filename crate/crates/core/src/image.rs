//! RGB image tensors with values in `[0, 1]`.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Smallest side length accepted for an image.
pub const MIN_SIDE: usize = 32;
pub const CHANNELS: usize = 3;

/// An H×W×3 image with every entry finite and within `[0, 1]`.
///
/// Pixels are stored planar, as a `(channel, row, column)` array, which is
/// the layout the convolution code consumes directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f32>,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c != CHANNELS {
            return Err(Error::Dimension(format!("expected {CHANNELS} channels, got {c}")));
        }
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::Dimension(format!(
                "image is {h}x{w}, minimum side is {MIN_SIDE}"
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { data })
    }

    /// Builds an image from arbitrary values, clamping into `[0, 1]`.
    /// Non-finite entries become 0.
    pub fn from_clamped(mut data: Array3<f32>) -> Result<Self> {
        data.mapv_inplace(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
        Self::new(data)
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::new(Array3::from_shape_fn((CHANNELS, height, width), |(c, _, _)| rgb[c]))
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[[c, y, x]]
    }

    /// Per-channel pixel mean, accumulated in 64-bit.
    pub fn channel_means(&self) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        for (c, plane) in self.data.axis_iter(Axis(0)).enumerate() {
            let sum: f64 = plane.iter().map(|&v| v as f64).sum();
            out[c] = (sum / plane.len() as f64) as f32;
        }
        out
    }

    /// Network input in the requested precision.
    pub fn to_input<F: Float + FromPrimitive>(&self) -> Array3<F> {
        self.data.mapv(|v| F::from_f32(v).unwrap())
    }

    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        if height == self.height() && width == self.width() {
            return Ok(self.clone());
        }
        let mut out = Array3::zeros((CHANNELS, height, width));
        for c in 0..CHANNELS {
            let plane = resize_bilinear(self.data.index_axis(Axis(0), c), height, width);
            out.index_axis_mut(Axis(0), c).assign(&plane);
        }
        Self::from_clamped(out)
    }

    /// Mirror along the vertical axis (columns reversed).
    pub fn hflip(&self) -> Self {
        let mut data = self.data.clone();
        data.invert_axis(Axis(2));
        Self { data }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((CHANNELS, h as usize, w as usize), |(c, y, x)| {
            img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
        });
        Self::new(data)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let (h, w) = (self.height(), self.width());
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c: usize| (self.data[[c, y as usize, x as usize]] * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save(path)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear<F: Float + FromPrimitive>(
    src: ArrayView2<'_, F>,
    height: usize,
    width: usize,
) -> Array2<F> {
    let (sh, sw) = src.dim();
    let sy = sh as f64 / height as f64;
    let sx = sw as f64 / width as f64;
    let taps = |dst: usize, scale: f64, len: usize| {
        let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (pos.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, F::from_f64(pos - i0 as f64).unwrap())
    };
    Array2::from_shape_fn((height, width), |(y, x)| {
        let (y0, y1, fy) = taps(y, sy, sh);
        let (x0, x1, fx) = taps(x, sx, sw);
        let one = F::one();
        let top = src[[y0, x0]] * (one - fx) + src[[y0, x1]] * fx;
        let bottom = src[[y1, x0]] * (one - fx) + src[[y1, x1]] * fx;
        top * (one - fy) + bottom * fy
    })
}
