//! Data ingestion: image files, synthetic rectified-stereo scenes with exact
//! ground-truth disparity, stage resizing, and the training augmentations.

mod augment;
mod image_io;
mod resize;
mod synth;

pub use augment::{augment, flip_swap};
pub use image_io::{
    load_image, normalize_byte, quantize_to_byte, read_f32_raster, read_u8_raster, save_image,
    write_f32_raster, write_u8_raster,
};
pub use resize::{resize_bilinear, resize_disparity, resize_for_stage, resize_nearest, resize_to};
pub use synth::{
    generate_synthetic_pair, load_dataset, write_dataset, SceneFamily, SurfaceSpec,
    SyntheticSceneSpec, TextureKind,
};

use crate::error::{Error, Result};
use crate::geometry::Calibration;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A rectified stereo pair plus calibration and, for synthetic data, the
/// exact ground-truth disparity of the left image and an occlusion mask
/// (left pixels with no counterpart in the right image).
#[derive(Clone, Debug)]
pub struct StereoSample<F: Scalar> {
    pub id: String,
    pub left: Tensor<F>,
    pub right: Tensor<F>,
    pub calibration: Calibration,
    pub gt_disparity: Option<Tensor<F>>,
    pub occlusion: Option<Tensor<F>>,
}

impl<F: Scalar> StereoSample<F> {
    pub fn new(
        id: impl Into<String>,
        left: Tensor<F>,
        right: Tensor<F>,
        calibration: Calibration,
        gt_disparity: Option<Tensor<F>>,
        occlusion: Option<Tensor<F>>,
    ) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(Error::Config(format!(
                "stereo pair shapes differ: {:?} vs {:?}",
                left.shape(),
                right.shape()
            )));
        }
        let (_, h, w) = left.spatial_dims()?;
        if let Some(gt) = &gt_disparity {
            if gt.shape() != [h, w] {
                return Err(Error::Config(format!(
                    "gt disparity shape {:?} does not match {h}x{w}",
                    gt.shape()
                )));
            }
            gt.check_finite("gt disparity")?;
            if gt.data().iter().any(|&v| v < F::zero()) {
                return Err(Error::Config("gt disparity must be non-negative".into()));
            }
        }
        calibration.validate()?;
        Ok(StereoSample {
            id: id.into(),
            left,
            right,
            calibration,
            gt_disparity,
            occlusion,
        })
    }

    pub fn resolution(&self) -> [usize; 2] {
        let (_, h, w) = self.left.spatial_dims().expect("validated");
        [h, w]
    }

    pub fn channels(&self) -> usize {
        self.left.spatial_dims().expect("validated").0
    }
}
