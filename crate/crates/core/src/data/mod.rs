//! Toy datasets, augmentation, robustness perturbations and file I/O.

mod augment;
pub mod io;
mod perturb;
mod toy;

pub use augment::{apply_augment, augment, AugmentDraw};
pub use perturb::{add_noise, apply_rigid, permute, resample, rotate_y, Perturbation};
pub use toy::{generate_toy, sample_shape, Dataset, ShapeKind, Task, ToyDatasetSpec};
