//! Differentiable recall@k: smooth ranks and counts, similarity mixup, and
//! chunked large-batch gradients.

mod block;
mod chunked;
mod loss;
mod sampler;
mod simix;
mod smooth;

pub use block::{cross_similarity, similarity_matrix, smooth_rank, SimilarityBlock};
pub use chunked::{chunked_gradients, monolithic_gradients, GradientResult};
pub use loss::{recall_sum_node, rsk_loss, rsk_loss_node, rsk_loss_on_embeddings, smooth_ranks_node, RankMasks};
pub use sampler::{sample_batch, sample_batch_with, BatchPlan, DEFAULT_SAMPLES_PER_CLASS, MAX_DEFAULT_BATCH};
pub use simix::{simix_expand, SimixExpansion, SimixPlan};
pub use smooth::{heaviside_node, smooth_heaviside, SmoothParams};
