//! Dataset ingestion, raw tensor I/O, and synthetic generators.

pub mod dataset;
pub mod image_batch;
pub mod image_dir;
pub mod synth2d;
pub mod synth_images;
pub mod tensor_io;

pub use dataset::{BatchData, DataStore, Dataset};
pub use image_batch::ImageBatch;
pub use image_dir::{load_image_dir, save_image_dir};
pub use synth2d::{gen_mixture4, gen_reference_gaussian, gen_two_moons};
pub use synth_images::gen_texture_images;
