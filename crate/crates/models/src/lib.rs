//! Networks and training loops for trajectory prediction on BEV rasters.

pub mod error;
pub mod layers;
pub mod model;
pub mod seq;
pub mod train;

pub use error::{Error, Result};
pub use model::{
    covernet_forward, covernet_loss, mtp_forward, mtp_loss, EncoderConfig, HeadKind, ImageInput,
    Model, ModelConfig, ModelInput, TinyEncoder,
};
pub use seq::{
    evaluate_seq, generate_seq, seq_forward, train_seq, SeqConfig, SeqRegressor, SeqReport,
    SeqSample,
};
pub use train::{
    evaluate, finetune, predict_all, prepare_samples, pretrain_encoder, train_model, EncoderInit,
    FinetuneConfig, FinetuneOutcome, LrSchedule, PretrainExample, PretrainOutcome, PretrainTask,
    Sample, TrainConfig,
};
