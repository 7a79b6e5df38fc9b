use nalgebra::DMatrix;

use crate::{FusionError, Result};

/// An `H x W x E` feature tensor stored as an `(H*W) x E` matrix; row
/// `i * W + j` holds the feature at row `i`, column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub h: usize,
    pub w: usize,
    pub data: DMatrix<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, e: usize) -> Self {
        Self {
            h,
            w,
            data: DMatrix::zeros(h * w, e),
        }
    }

    pub fn new(h: usize, w: usize, data: DMatrix<f64>) -> Result<Self> {
        if h == 0 || w == 0 || data.ncols() == 0 {
            return Err(FusionError::Shape("feature maps need H, W, E >= 1".into()));
        }
        if data.nrows() != h * w {
            return Err(FusionError::Shape(format!(
                "{} rows for a {h}x{w} map",
                data.nrows()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(FusionError::Input("feature map has non-finite entries".into()));
        }
        Ok(Self { h, w, data })
    }

    pub fn e(&self) -> usize {
        self.data.ncols()
    }

    pub fn positions(&self) -> usize {
        self.h * self.w
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.h == other.h && self.w == other.w && self.e() == other.e()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self::zeros(self.h, self.w, self.e())
    }
}

pub(crate) fn check_same(a: &FeatureMap, b: &FeatureMap, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(FusionError::Shape(format!(
            "{what}: {}x{}x{} vs {}x{}x{}",
            a.h,
            a.w,
            a.e(),
            b.h,
            b.w,
            b.e()
        )))
    }
}
