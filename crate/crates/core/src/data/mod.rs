//! Dataset ingestion and sequence shaping.

mod batch;
pub mod fixtures;
mod idx;
mod images;
mod tokens;

pub use batch::{BatchInputs, Batches, Dataset, SequenceBatch};
pub use idx::{
    parse_idx, serialize_idx_images, serialize_idx_labels, IdxData, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use images::{
    standardize, to_pixel_sequence, to_row_sequence, DenseSet, ImageSet, Standardization,
    StandardizeScope, MNIST_CLASSES, MNIST_SIDE, STD_FLOOR,
};
pub use tokens::{load_tokens, pad_truncate, parse_tokens, TokenSet, Truncation};
