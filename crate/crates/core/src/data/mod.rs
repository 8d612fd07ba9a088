//! Image degradation, normalization, augmentation, synthetic pairs and PNG IO.

pub mod image_io;
pub mod kspace;
pub mod misalign;
pub mod normalize;
pub mod pair;
pub mod phantom;

pub use image_io::{read_image, write_image, BitDepth};
pub use kspace::{kspace_degrade, Degraded};
pub use misalign::{misalign, MisalignSpec};
pub use normalize::{denormalize, normalize, NormRecord};
pub use pair::{synth_pair, ImagePair};
