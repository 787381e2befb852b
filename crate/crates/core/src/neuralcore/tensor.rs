use crate::error::{Error, Result};
use crate::imagemath::RasterImage;
use crate::scalar::Scalar;

/// Dense row-major array. Image batches use `[N, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} elements, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension (batch size).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per leading index.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// `(N, C, H, W)` of a 4-D tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected a 4-D tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    /// `(N, F)` of a 2-D tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected a 2-D tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Converts element type through the primal `f64` value.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::lit(v.primal())).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum()
    }

    /// Stacks RGB images of identical size into `[N, 3, H, W]`.
    pub fn from_images<'a, U: Scalar>(images: impl IntoIterator<Item = &'a RasterImage<U>>) -> Result<Self> {
        let mut shape: Option<(usize, usize)> = None;
        let mut data = Vec::new();
        let mut n = 0;
        for img in images {
            let dims = (img.height(), img.width());
            match shape {
                None => shape = Some(dims),
                Some(s) if s != dims => {
                    return Err(Error::Shape(format!("image batch mixes sizes {s:?} and {dims:?}")));
                }
                _ => {}
            }
            data.extend(img.data().iter().map(|v| T::lit(v.primal())));
            n += 1;
        }
        let (h, w) = shape.ok_or_else(|| Error::Shape("empty image batch".into()))?;
        Tensor::new(vec![n, 3, h, w], data)
    }

    /// Extracts image `index` of a `[N, 3, H, W]` batch (clamped to `[0, 1]`).
    pub fn to_image(&self, index: usize) -> RasterImage<T> {
        let (_, c, h, w) = self.dims4();
        assert_eq!(c, 3, "to_image needs 3 channels");
        let stride = 3 * h * w;
        let slice = &self.data[index * stride..(index + 1) * stride];
        RasterImage::new(h, w, slice.iter().map(|v| if v.is_finite() { *v } else { T::zero() }).collect())
            .expect("shape checked")
    }

    /// Rows `start..start+len` along the leading dimension.
    pub fn narrow(&self, start: usize, len: usize) -> Self {
        let rl = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Tensor { shape, data: self.data[start * rl..(start + len) * rl].to_vec() }
    }

    /// Concatenates along the leading dimension.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let mut shape = first.shape.clone();
        shape[0] = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::Shape(format!("concat {:?} with {:?}", first.shape, p.shape)));
            }
            shape[0] += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }
}
