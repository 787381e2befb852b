use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned pixel rectangle, `x`/`w` along columns and `y`/`h` along rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        PixelBox { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_within(&self, height: usize, width: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y && row < self.y + self.h && col >= self.x && col < self.x + self.w
    }
}

/// Planar RGB image with values clamped to `[0, 1]`.
///
/// Samples are stored channel-major: `data[c·H·W + y·W + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage<T = f64> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> RasterImage<T> {
    /// Builds an image from planar data, clamping every sample into `[0, 1]`.
    pub fn new(height: usize, width: usize, mut data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty image {height}x{width}")));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Shape(format!(
                "expected {} samples for a {height}x{width} RGB image, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample at index {i}")));
        }
        for v in &mut data {
            *v = v.max(T::zero()).min(T::one());
        }
        Ok(RasterImage { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [T; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let n = height * width;
        let mut data = vec![T::zero(); 3 * n];
        for y in 0..height {
            for x in 0..width {
                let px = f(y, x);
                for c in 0..3 {
                    let v = if px[c].is_finite() { px[c] } else { T::zero() };
                    data[c * n + y * width + x] = v.max(T::zero()).min(T::one());
                }
            }
        }
        RasterImage { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [T; 3] {
        [self.get(0, row, col), self.get(1, row, col), self.get(2, row, col)]
    }

    /// Writes a pixel, clamping into `[0, 1]`.
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [T; 3]) {
        let n = self.height * self.width;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[c * n + row * self.width + col] = v.max(T::zero()).min(T::one());
        }
    }

    pub fn crop(&self, region: PixelBox) -> Result<Self> {
        if !region.fits_within(self.height, self.width) {
            return Err(Error::Shape(format!(
                "crop {region:?} outside {}x{} image",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(region.h, region.w, |y, x| self.pixel(region.y + y, region.x + x)))
    }

    pub fn cast<U: Scalar>(&self) -> RasterImage<U> {
        RasterImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.primal())).collect(),
        }
    }
}

/// Decorrelated lightness/opponent image; channels are (ℓ, α, β).
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage<T = f64> {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) data: Vec<T>,
}

impl<T: Scalar> LabImage<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != 3 * height * width || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "expected {} samples for a {height}x{width} lab image, got {}",
                3 * height * width,
                data.len()
            )));
        }
        Ok(LabImage { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }
}

/// Single-channel real array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T = f64> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Plane { height, width, data }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }
}

/// Per-pixel weights in `[0, 1]` marking a region of a host image.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask<T = f64> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> RegionMask<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} weights, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::InvalidImage(format!("mask weight {v} outside [0, 1]")));
        }
        Ok(RegionMask { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        let value = value.max(T::zero()).min(T::one());
        RegionMask { height, width, data: vec![value; height * width] }
    }

    /// Binary mask that is one exactly on `region`.
    pub fn from_box(height: usize, width: usize, region: PixelBox) -> Self {
        Self::from_predicate(height, width, |y, x| region.contains(y, x))
    }

    pub fn from_predicate(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(if f(y, x) { T::one() } else { T::zero() });
            }
        }
        RegionMask { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero() || *v == T::one())
    }

    /// Number of pixels with nonzero weight.
    pub fn support(&self) -> usize {
        self.data.iter().filter(|v| **v > T::zero()).count()
    }
}
