//! Interpretation of trained pathway models and survival analysis of the
//! genes they single out.
//!
//! Plots are plain SVG 1.1; every plot that carries data has a CSV sidecar.

mod cluster;
mod paths;
mod pca;
mod plot;
mod survival;

pub use cluster::{cosine_distance, hierarchical_cluster, ClusterTree, DistanceMetric, Merge};
pub use paths::{anpw, neural_path_weights, rank_pathways_by_mi, top_genes_by_anpw, GeneWeight, RankedPathway};
pub use pca::{pca_2d, Pca2d};
pub use plot::{emit_clustermap, emit_featuremap, emit_km_plot, Heatmap, ScatterMap};
pub use survival::{
    apply_survival_window, km_estimate, logrank_test, tercile_split, tercile_survival, KmCurve, LogrankResult,
    TercileComparison, FIVE_YEARS_DAYS,
};
