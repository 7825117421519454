use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{
    save_tensor, DatasetManifest, FeatureMap, LabelMask, LogitMap, OodLabel, OodMask,
    DEFAULT_IGNORE_VALUE, FEATURES_DIR, LABELS_DIR, LOGITS_DIR, OOD_MASKS_DIR,
};

pub const TRAIN_DIR: &str = "train";
pub const TEST_DIR: &str = "test";

/// Gaussian-cluster toy dataset with a known answer.
///
/// Inlier feature cells come from one isotropic Gaussian per class, with
/// centers `inlier_separation` apart. Test images additionally hold a square
/// block of anomalous cells drawn around a center at least `ood_distance`
/// from every inlier center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    /// Feature grid side length.
    pub grid: usize,
    /// Pixels per feature cell along each axis.
    pub stride: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub sigma: f32,
    pub inlier_separation: f32,
    pub ood_distance: f32,
    /// Side length of the anomalous block, in cells.
    pub ood_cells: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            train_images: 8,
            test_images: 4,
            grid: 16,
            stride: 4,
            channels: 16,
            num_classes: 3,
            sigma: 0.5,
            inlier_separation: 10.0,
            ood_distance: 20.0,
            ood_cells: 4,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("synthetic dataset: {msg}")));
        if self.num_classes < 2 {
            return fail("need at least 2 classes");
        }
        if self.channels <= self.num_classes {
            return fail("channels must exceed num_classes");
        }
        if self.grid == 0 || self.stride == 0 || self.train_images == 0 || self.test_images == 0 {
            return fail("grid, stride and image counts must be positive");
        }
        if self.ood_cells == 0 || self.ood_cells > self.grid {
            return fail("ood_cells must be in 1..=grid");
        }
        let positive = |v: f32| v.is_finite() && v > 0.0;
        if !(positive(self.sigma)
            && positive(self.inlier_separation)
            && positive(self.ood_distance))
        {
            return fail("sigma and distances must be positive");
        }
        Ok(())
    }

    fn centers(&self) -> (Vec<Vec<f32>>, Vec<f32>) {
        // pairwise distance between a*e_i and a*e_j is a*sqrt(2)
        let a = self.inlier_separation / std::f32::consts::SQRT_2;
        let inliers = (0..self.num_classes)
            .map(|i| {
                let mut c = vec![0.0; self.channels];
                c[i] = a;
                c
            })
            .collect();
        // orthogonal to every inlier center, so at least ood_distance away
        let mut ood = vec![0.0; self.channels];
        ood[self.num_classes] = self.ood_distance;
        (inliers, ood)
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
    inliers: Vec<Vec<f32>>,
    ood: Vec<f32>,
    noise: Normal<f32>,
}

/// Cell contents: a class index or `None` for an anomaly.
type Cells = Vec<Option<usize>>;

impl Generator<'_> {
    fn cells(&mut self, with_anomaly: bool) -> Cells {
        let g = self.spec.grid;
        let classes = self.spec.num_classes;
        let mut cells: Cells = (0..g * g)
            .map(|_| Some(self.rng.gen_range(0..classes)))
            .collect();
        if with_anomaly {
            let side = self.spec.ood_cells;
            let (top, left) = (
                self.rng.gen_range(0..=g - side),
                self.rng.gen_range(0..=g - side),
            );
            for r in top..top + side {
                for c in left..left + side {
                    cells[r * g + c] = None;
                }
            }
        }
        cells
    }

    fn features(&mut self, cells: &Cells) -> Result<FeatureMap> {
        let c = self.spec.channels;
        let mut data = Vec::with_capacity(cells.len() * c);
        for cell in cells {
            let center = match cell {
                Some(class) => &self.inliers[*class],
                None => &self.ood,
            };
            for &m in center {
                data.push(m + self.noise.sample(&mut self.rng));
            }
        }
        FeatureMap::new(self.spec.grid, self.spec.grid, c, data)
    }

    fn cell_of(&self, pixel: usize) -> usize {
        let side = self.spec.grid * self.spec.stride;
        let (y, x) = (pixel / side, pixel % side);
        (y / self.spec.stride) * self.spec.grid + x / self.spec.stride
    }

    fn logits(&mut self, cells: &Cells) -> Result<LogitMap> {
        let side = self.spec.grid * self.spec.stride;
        let k = self.spec.num_classes;
        let unit = Normal::new(0.0f32, 1.0).expect("valid normal");
        let mut data = Vec::with_capacity(side * side * k);
        for p in 0..side * side {
            // inliers get a confident margin, anomalies a weak one on a random class
            let (class, margin) = match cells[self.cell_of(p)] {
                Some(class) => (class, 5.0),
                None => (self.rng.gen_range(0..k), 1.5),
            };
            for j in 0..k {
                let z = unit.sample(&mut self.rng);
                data.push(if j == class { margin + z } else { z });
            }
        }
        LogitMap::new(side, side, k, data)
    }

    fn labels(&self, cells: &Cells) -> Result<LabelMask> {
        let side = self.spec.grid * self.spec.stride;
        let data = (0..side * side)
            .map(|p| cells[self.cell_of(p)].map_or(DEFAULT_IGNORE_VALUE, |c| c as i32))
            .collect();
        LabelMask::new(side, side, data, DEFAULT_IGNORE_VALUE)
    }

    fn ood_mask(&self, cells: &Cells) -> Result<OodMask> {
        let side = self.spec.grid * self.spec.stride;
        let data = (0..side * side)
            .map(|p| match cells[self.cell_of(p)] {
                Some(_) => OodLabel::Inlier,
                None => OodLabel::Anomaly,
            })
            .collect();
        OodMask::new(side, side, data)
    }
}

fn create_dirs(root: &Path, dirs: &[&str]) -> Result<()> {
    for d in dirs {
        let path = root.join(d);
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes `<out>/train` (features, logits, labels) and `<out>/test`
/// (features, logits, labels, anomaly masks). Output depends only on `spec`.
pub fn generate_synthetic(out: &Path, spec: &SynthSpec) -> Result<()> {
    spec.validate()?;
    let (inliers, ood) = spec.centers();
    let mut gen = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        inliers,
        ood,
        noise: Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(e.to_string()))?,
    };
    let manifest = DatasetManifest {
        num_classes: spec.num_classes,
        ignore_value: DEFAULT_IGNORE_VALUE,
        model_id: Some("synthetic".into()),
        layer: None,
    };

    for (split, count, anomalies) in [
        (TRAIN_DIR, spec.train_images, false),
        (TEST_DIR, spec.test_images, true),
    ] {
        let root = out.join(split);
        create_dirs(&root, &[FEATURES_DIR, LOGITS_DIR, LABELS_DIR])?;
        if anomalies {
            create_dirs(&root, &[OOD_MASKS_DIR])?;
        }
        manifest.save(&root)?;
        for i in 0..count {
            let name = format!("{split}_{i:04}.npy");
            let cells = gen.cells(anomalies);
            save_tensor(&gen.features(&cells)?, &root.join(FEATURES_DIR).join(&name))?;
            save_tensor(&gen.logits(&cells)?, &root.join(LOGITS_DIR).join(&name))?;
            save_tensor(&gen.labels(&cells)?, &root.join(LABELS_DIR).join(&name))?;
            if anomalies {
                save_tensor(
                    &gen.ood_mask(&cells)?,
                    &root.join(OOD_MASKS_DIR).join(&name),
                )?;
            }
        }
    }
    Ok(())
}
