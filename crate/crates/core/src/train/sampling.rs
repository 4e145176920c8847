use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{normalize_cameras, Camera, NormalizationRecord};
use crate::io::Dataset;
use crate::maps::{AzimuthMap, SilhouetteMask};
use crate::seed::derive_seed;

/// One pixel of one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelRef {
    pub view: u32,
    pub col: u32,
    pub row: u32,
}

/// Every pixel inside the dilated silhouettes, across all views, in
/// view-major raster order.
pub fn dilated_pool(masks: &[SilhouetteMask], dilation: u32) -> Result<Vec<PixelRef>> {
    let mut pool = Vec::new();
    for (view, mask) in masks.iter().enumerate() {
        for (col, row, inside) in mask.dilate(dilation).pixels() {
            if *inside {
                pool.push(PixelRef {
                    view: view as u32,
                    col,
                    row,
                });
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::Dataset("dilated silhouettes are empty".into()));
    }
    Ok(pool)
}

/// Uniform sample of `batch_size` pool entries, without replacement when the
/// pool is large enough. Deterministic in `(seed, epoch, iteration)`.
pub fn sample_pixels(
    pool: &[PixelRef],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    iteration: usize,
) -> Result<Vec<PixelRef>> {
    if pool.is_empty() {
        return Err(Error::Dataset("no pixels to sample from".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64, iteration as u64]));
    if batch_size <= pool.len() {
        Ok(index::sample(&mut rng, pool.len(), batch_size)
            .into_iter()
            .map(|i| pool[i])
            .collect())
    } else {
        use rand::Rng;
        Ok((0..batch_size)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect())
    }
}

/// Normalized cameras and observations used for optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingViews {
    pub cameras: Vec<Camera>,
    pub azimuths: Vec<AzimuthMap>,
    pub masks: Vec<SilhouetteMask>,
    pool: Vec<PixelRef>,
}

impl TrainingViews {
    /// `cameras` must already live in the normalized scene.
    pub fn new(
        cameras: Vec<Camera>,
        azimuths: Vec<AzimuthMap>,
        masks: Vec<SilhouetteMask>,
        dilation: u32,
    ) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::EmptyInput("training needs at least one view"));
        }
        if azimuths.len() != cameras.len() || masks.len() != cameras.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cameras, {} azimuth maps, {} masks",
                cameras.len(),
                azimuths.len(),
                masks.len()
            )));
        }
        for ((c, a), m) in cameras.iter().zip(&azimuths).zip(&masks) {
            let dims = (c.width(), c.height());
            if a.dims() != dims || m.dims() != dims {
                return Err(Error::ShapeMismatch(
                    "map size differs from camera size".into(),
                ));
            }
        }
        let pool = dilated_pool(&masks, dilation)?;
        Ok(Self {
            cameras,
            azimuths,
            masks,
            pool,
        })
    }

    /// Normalizes the dataset's cameras (unless already normalized) and
    /// returns the record that maps the normalized scene back to world units.
    pub fn from_dataset(
        dataset: &Dataset,
        scale_ratio: f64,
        dilation: u32,
    ) -> Result<(Self, NormalizationRecord)> {
        let (cameras, record) = match dataset.manifest.normalization {
            Some(record) => (dataset.cameras.clone(), record),
            None => {
                let n = normalize_cameras(&dataset.cameras, scale_ratio)?;
                (n.cameras, n.record)
            }
        };
        let views = Self::new(
            cameras,
            dataset.azimuths.clone(),
            dataset.masks.clone(),
            dilation,
        )?;
        Ok((views, record))
    }

    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn pool(&self) -> &[PixelRef] {
        &self.pool
    }

    /// Iterations that make up one epoch: one pass over the dilated pixels.
    pub fn iterations_per_epoch(&self, batch_size: usize) -> usize {
        self.pool.len().div_ceil(batch_size.max(1))
    }
}
