//! Joint embedding space: scaled cosine, contrastive loss, hard mining and
//! the retrieval index.

mod export;
mod hyper;
mod index;
mod loss;
mod mining;
mod similarity;

pub use export::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, ExportHeader,
    ExportTag,
};
pub use hyper::HyperParams;
pub use index::{EmbeddingIndex, EmbeddingTag, EmbeddingVector, Hit};
pub use loss::{nce_loss, nce_loss_with_grad, NceGrad};
pub use mining::{mine_hard, repeat_factor, Candidate, Mined};
pub use similarity::{dot, l2_norm, normalized, scaled_cosine};
