//! Shared inputs for the benchmarks.

use siv_core::directions::{direction_in_space, train_hyperplane, Hyperplane, Space, TrainConfig};
use siv_core::intervene::{edit_sign, scale_direction, z_edit, InterventionProblem, LossWeights};
use siv_core::pipeline::{sample_dataset, sample_latent, Dataset};
use siv_core::stylegen::{build_planted_generator, segmentation_mask, PlantedGenerator};

pub struct Fixture {
    pub planted: PlantedGenerator,
    pub dataset: Dataset,
    pub plane_z: Hyperplane,
    pub plane_s: Hyperplane,
}

impl Fixture {
    /// Seed-7 planted generator with 600 samples and both planes for
    /// attribute 0.
    pub fn new() -> Self {
        let planted = build_planted_generator(7).unwrap();
        let (dataset, _) =
            sample_dataset(&planted.weights, &planted.attributes, 600, 7, 1).unwrap();
        let y = dataset.labels_for(planted.attributes[0].id).unwrap();
        let cfg = TrainConfig::default();
        let plane_z = train_hyperplane(Space::Z, &dataset.z, &y, &cfg).unwrap().0;
        let plane_s = train_hyperplane(Space::S, &dataset.s, &y, &cfg).unwrap().0;
        Self {
            planted,
            dataset,
            plane_z,
            plane_s,
        }
    }

    /// Intervention problem for one seeded latent.
    pub fn problem(&self, index: u64) -> InterventionProblem {
        let w = &self.planted.weights;
        let z = sample_latent(99, index, w.arch.d_z);
        let sign = edit_sign(&self.plane_z, &z).unwrap();
        let ze = z_edit(w, &self.plane_z, &z, 3.0 * sign).unwrap();
        let unit = direction_in_space(&self.plane_s).unwrap();
        let dsn = scale_direction(&unit, &ze.dsz, sign, None);
        let mask = segmentation_mask(&self.planted.partitions[0]);
        InterventionProblem::new(w, &ze.s, ze.dsz, dsn, mask, LossWeights::default()).unwrap()
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
