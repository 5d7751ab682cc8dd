//! Descriptive structure of the feature space: correlation graph,
//! centrality, block model, projections and plot data.

pub mod graph;
pub mod plot;
pub mod sbm;
pub mod tsne;

pub use graph::{correlation_graph, eigencentrality, layout, Centrality, Edge, FeatureGraph, LayoutConfig};
pub use plot::{inclusion_overlay, read_overlay, read_partition, write_partition, Overlay};
pub use sbm::{description_length, nmi, sbm_fit, BlockPartition, SbmConfig};
pub use tsne::{tsne, ProjectionResult, TsneConfig};
