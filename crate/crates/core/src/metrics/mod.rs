//! Exact, non-differentiable evaluation metrics and their oracles.

mod edit;
mod iou;
mod retrieval;

pub use edit::{
    edit_distance, edit_distance_naive, total_edit_distance, SymbolSeq, NAIVE_MAX_LEN,
};
pub use iou::{
    clip_convex, iou, iou_axis_aligned, iou_monte_carlo, iou_rotated, polygon_area, AxisBox, BBox,
    Point, RotatedBox,
};
pub use retrieval::{knn_classify, recall_at_k, recall_at_ks, recall_at_ks_from_scores, LabeledEmbeddings};
