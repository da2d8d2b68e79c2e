//! Linear probing: a trainable softmax-regression head on frozen embeddings.

mod adam;
mod checkpoint;
mod model;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{decode_probe, encode_probe, load_probe, save_probe, PROBE_MAGIC};
pub use model::{argmax, evaluate, loss_and_grad, softmax, LinearProbe, LossGrad, Samples};
pub use train::{train_probe, train_samples, EarlyStopping, EpochRecord, StopVerdict, TrainConfig, TrainHistory};
