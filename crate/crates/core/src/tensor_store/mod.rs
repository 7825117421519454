//! On-disk tensor types and the dataset layout shared by every stage.
//!
//! All tensors are stored as NPY v1.0 files: float grids as `<f4`, label
//! grids as `<i4`, always little-endian and row-major.

mod dataset;
pub mod npy;
mod reference;

use std::path::Path;

pub use dataset::{
    scan_dataset, DatasetManifest, DatasetScan, Sample, DEFAULT_IGNORE_VALUE, FEATURES_DIR,
    LABELS_DIR, LOGITS_DIR, MANIFEST_FILE, OOD_MASKS_DIR,
};
pub use npy::{NpyArray, NpyData};
pub use reference::{ReferenceManifest, ReferenceSet};

use crate::error::{Error, Result};

/// Conversion between a typed tensor and its NPY representation.
pub trait TensorFile: Sized {
    fn from_npy(array: NpyArray) -> Result<Self>;
    fn to_npy(&self) -> NpyArray;
}

/// Loads and validates a typed tensor from an `.npy` file.
pub fn load_tensor<T: TensorFile>(path: &Path) -> Result<T> {
    let array = NpyArray::read(path)?;
    T::from_npy(array).map_err(|e| match e {
        Error::NonFinite { .. } | Error::Shape(_) | Error::Dtype { .. } | Error::Validation(_) => {
            Error::Validation(format!("{}: {e}", path.display()))
        }
        other => other,
    })
}

pub fn save_tensor<T: TensorFile>(tensor: &T, path: &Path) -> Result<()> {
    tensor.to_npy().write(path)
}

pub(crate) fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn expect_f32(array: NpyArray, rank: usize) -> Result<(Vec<usize>, Vec<f32>)> {
    if array.shape.len() != rank {
        return Err(Error::Shape(format!(
            "expected a rank-{rank} tensor, found shape {:?}",
            array.shape
        )));
    }
    if array.shape.contains(&0) {
        return Err(Error::Shape(format!(
            "zero-sized dimension in {:?}",
            array.shape
        )));
    }
    match array.data {
        NpyData::F32(data) => {
            check_finite(&data)?;
            Ok((array.shape, data))
        }
        NpyData::I32(_) => Err(Error::Dtype {
            found: "<i4".into(),
            expected: "'<f4'",
        }),
    }
}

fn expect_i32(array: NpyArray, rank: usize) -> Result<(Vec<usize>, Vec<i32>)> {
    if array.shape.len() != rank {
        return Err(Error::Shape(format!(
            "expected a rank-{rank} tensor, found shape {:?}",
            array.shape
        )));
    }
    if array.shape.contains(&0) {
        return Err(Error::Shape(format!(
            "zero-sized dimension in {:?}",
            array.shape
        )));
    }
    match array.data {
        NpyData::I32(data) => Ok((array.shape, data)),
        NpyData::F32(_) => Err(Error::Dtype {
            found: "<f4".into(),
            expected: "'<i4'",
        }),
    }
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {dims:?}")));
    }
    let expected: usize = dims.iter().product();
    if expected != len {
        return Err(Error::Shape(format!(
            "dims {dims:?} need {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// A grid of local embedding vectors, `height × width × channels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(&[height, width, channels], data.len())?;
        check_finite(&data)?;
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Flattened `positions × channels` matrix.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, position: usize) -> &[f32] {
        &self.data[position * self.channels..(position + 1) * self.channels]
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

impl TensorFile for FeatureMap {
    fn from_npy(array: NpyArray) -> Result<Self> {
        let (shape, data) = expect_f32(array, 3)?;
        Self::new(shape[0], shape[1], shape[2], data)
    }

    fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width, self.channels],
            data: NpyData::F32(self.data.clone()),
        }
    }
}

/// Per-pixel class logits, `height × width × num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f32>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(&[height, width, num_classes], data.len())?;
        if num_classes < 2 {
            return Err(Error::Validation(format!(
                "logit maps need at least 2 classes, got {num_classes}"
            )));
        }
        check_finite(&data)?;
        Ok(LogitMap {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.num_classes..(index + 1) * self.num_classes]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

impl TensorFile for LogitMap {
    fn from_npy(array: NpyArray) -> Result<Self> {
        let (shape, data) = expect_f32(array, 3)?;
        Self::new(shape[0], shape[1], shape[2], data)
    }

    fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width, self.num_classes],
            data: NpyData::F32(self.data.clone()),
        }
    }
}

/// Per-pixel semantic class ids with a sentinel for unlabeled pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<i32>,
    ignore_value: i32,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<i32>, ignore_value: i32) -> Result<Self> {
        check_dims(&[height, width], data.len())?;
        if let Some(i) = data.iter().position(|&v| v < 0 && v != ignore_value) {
            return Err(Error::Validation(format!(
                "negative label {} at flat index {i}",
                data[i]
            )));
        }
        Ok(LabelMask {
            height,
            width,
            data,
            ignore_value,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ignore_value(&self) -> i32 {
        self.ignore_value
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.width + col]
    }

    pub fn with_ignore_value(mut self, ignore_value: i32) -> Self {
        self.ignore_value = ignore_value;
        self
    }

    /// Checks every non-ignored label against the ontology size.
    pub fn validate_classes(&self, num_classes: usize) -> Result<()> {
        match self
            .data
            .iter()
            .position(|&v| v != self.ignore_value && v as usize >= num_classes)
        {
            Some(i) => Err(Error::Validation(format!(
                "label {} at flat index {i} is outside 0..{num_classes}",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }
}

impl TensorFile for LabelMask {
    fn from_npy(array: NpyArray) -> Result<Self> {
        let (shape, data) = expect_i32(array, 2)?;
        Self::new(shape[0], shape[1], data, DEFAULT_IGNORE_VALUE)
    }

    fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width],
            data: NpyData::I32(self.data.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OodLabel {
    Inlier,
    Anomaly,
    Void,
}

impl OodLabel {
    /// Stored values: 0 inlier, 1 anomaly, anything else void.
    pub fn from_code(code: i32) -> Self {
        match code {
            0 => OodLabel::Inlier,
            1 => OodLabel::Anomaly,
            _ => OodLabel::Void,
        }
    }

    pub fn code(self) -> i32 {
        match self {
            OodLabel::Inlier => 0,
            OodLabel::Anomaly => 1,
            OodLabel::Void => DEFAULT_IGNORE_VALUE,
        }
    }
}

/// Ground truth for anomaly evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OodMask {
    height: usize,
    width: usize,
    data: Vec<OodLabel>,
}

impl OodMask {
    pub fn new(height: usize, width: usize, data: Vec<OodLabel>) -> Result<Self> {
        check_dims(&[height, width], data.len())?;
        Ok(OodMask {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[OodLabel] {
        &self.data
    }

    pub fn count(&self, label: OodLabel) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    /// Whether the image has both classes and can be scored on its own.
    pub fn is_evaluable(&self) -> bool {
        self.count(OodLabel::Inlier) > 0 && self.count(OodLabel::Anomaly) > 0
    }
}

impl TensorFile for OodMask {
    fn from_npy(array: NpyArray) -> Result<Self> {
        let (shape, data) = expect_i32(array, 2)?;
        Self::new(
            shape[0],
            shape[1],
            data.into_iter().map(OodLabel::from_code).collect(),
        )
    }

    fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width],
            data: NpyData::I32(self.data.iter().map(|l| l.code()).collect()),
        }
    }
}

/// A grid of scalar anomaly scores (higher = more anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(&[height, width], data.len())?;
        check_finite(&data)?;
        Ok(ScoreMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Largest value in the map; maps are never empty.
    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

impl TensorFile for ScoreMap {
    fn from_npy(array: NpyArray) -> Result<Self> {
        let (shape, data) = expect_f32(array, 2)?;
        Self::new(shape[0], shape[1], data)
    }

    fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width],
            data: NpyData::F32(self.data.clone()),
        }
    }
}
