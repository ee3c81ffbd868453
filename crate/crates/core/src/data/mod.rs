//! Volume I/O, preprocessing, augmentation, patch sampling and phantoms.

pub mod augment;
pub mod dataset;
pub mod metaimage;
pub mod patch;
pub mod phantom;
pub mod preprocess;
pub mod volume;

pub use augment::{augment, AugmentConfig, FlipAxis, Rotation};
pub use dataset::{load_dataset, write_dataset, Case};
pub use metaimage::{read_metaimage, read_metaimage_typed, write_metaimage, write_metaimage_as, ElementType};
pub use patch::sample_patch;
pub use phantom::{phantom_generate, PhantomConfig};
pub use preprocess::{normalize_zscore, prepare, resample, resample_to, TARGET_SPACING};
pub use volume::{Spacing, Volume};
