//! Region and view encoders, the combined training loss with analytic
//! gradients, and the training loop.

mod features;
mod gradcheck;
mod loss;
mod model;
mod checkpoint;
mod infer;
mod nn;
mod train;

pub use features::{mask_features, DetectionRegion, FeatureMap};
pub use gradcheck::{gradient_check, random_problem, relative_error, GradCheckReport};
pub use loss::{backward, evaluate, total_loss, Batch, Evaluation, Freeze, LossBreakdown, TrainRegion, TrainView};
pub use model::{
    fit_normalization, heads_forward, stream_forward, ConvLayer, EncoderConfig, EncoderParams, HeadOutputs, Heads,
    Linear, Stream, StreamCache,
};
pub use train::{
    flip_region, initial_params, jitter_box, region_example, sample_batch, trace_csv, train, train_from,
    training_bins, write_trace_csv, Optimizer, RegionExample, TraceRow, TrainConfig, TrainOutput, TrainingSet,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use infer::{encode_view, predict_region, RegionPrediction};
