//! Encoder-decoder segmentation network with hand-written backward passes,
//! ADADELTA training and a binary checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;
pub mod real;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::Tensor3;
pub use network::{input_from_images, loss, BackboneConfig, BackboneParams, LabelMap, ParamTensor};
pub use optim::{Adadelta, AdadeltaConfig};
pub use real::Real;
pub use train::{median_frequency_weights, train, train_with_progress, Reduction, TrainConfig, TrainRecord, TrainReport, Trainer};
