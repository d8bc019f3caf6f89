//! Two-channel U-Net noise predictor, its parameter container and training.

mod augment;
mod params;
mod train;
mod unet;

pub use augment::{augment, warp, AugmentationPolicy};
pub use params::{
    decode_params, encode_params, load_params, load_params_into, save_params, ParamFile, ParamStore, PARAM_MAGIC,
    PARAM_VERSION,
};
pub use train::{log_csv, train_step, validation_loss, Adam, StepRecord, TrainConfig, Trainer};
pub use unet::{time_embedding, ForwardPass, TinyUNet, UNetConfig};
