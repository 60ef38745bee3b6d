//! Spatio-temporal object containers.
//!
//! An [`ImageFrame`] is a single N x N density snapshot stored as a vectorized
//! length-N^2 column (row-major pixel order). A [`DynamicObject`] stacks P such
//! columns into an N^2 x P matrix, one column per time instant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One N x N image, vectorized row-major. Densities are dimensionless
/// attenuation values; the support is assumed to lie inside the inscribed
/// disc of diameter N pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    n: usize,
    data: DVector<f64>,
}

impl ImageFrame {
    pub fn new(n: usize, data: DVector<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape("ImageFrame", n * n, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ImageFrame"));
        }
        Ok(Self { n, data })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(n, DVector::from_vec(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: DVector::zeros(n * n),
        }
    }

    /// Build from a pixel function of (row, col).
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = DVector::zeros(n * n);
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = f(r, c);
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The whole dynamic object: an N^2 x P matrix whose column t is frame f_t.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicObject {
    n: usize,
    data: DMatrix<f64>,
}

impl DynamicObject {
    pub fn new(n: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != n * n {
            return Err(Error::shape("DynamicObject rows", n * n, data.nrows()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("DynamicObject"));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            data: DMatrix::zeros(n * n, p),
        }
    }

    pub fn from_frames(frames: &[ImageFrame]) -> Result<Self> {
        let n = frames
            .first()
            .ok_or_else(|| Error::InvalidParam("empty frame list".into()))?
            .n();
        let mut data = DMatrix::zeros(n * n, frames.len());
        for (t, fr) in frames.iter().enumerate() {
            if fr.n() != n {
                return Err(Error::shape("DynamicObject frame", n, fr.n()));
            }
            data.column_mut(t).copy_from(fr.data());
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    /// Pixels of frame t as a contiguous slice (columns are contiguous).
    pub fn frame_slice(&self, t: usize) -> &[f64] {
        let n2 = self.n * self.n;
        &self.data.as_slice()[t * n2..(t + 1) * n2]
    }

    /// Extract frame t as an owned image.
    pub fn frame(&self, t: usize) -> Result<ImageFrame> {
        if t >= self.p() {
            return Err(Error::OutOfRange {
                what: "frame index",
                index: t,
                len: self.p(),
            });
        }
        Ok(ImageFrame {
            n: self.n,
            data: DVector::from_column_slice(self.frame_slice(t)),
        })
    }

    pub fn set_frame(&mut self, t: usize, frame: &ImageFrame) -> Result<()> {
        if frame.n() != self.n {
            return Err(Error::shape("set_frame", self.n, frame.n()));
        }
        if t >= self.p() {
            return Err(Error::OutOfRange {
                what: "frame index",
                index: t,
                len: self.p(),
            });
        }
        self.data.column_mut(t).copy_from(frame.data());
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }
}

/// Extract the t-th frame of a dynamic object (column t reshaped N x N).
pub fn frame_extract(f: &DynamicObject, t: usize) -> Result<ImageFrame> {
    f.frame(t)
}
