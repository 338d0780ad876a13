//! CAD-model descriptor database: aggregation, persistence and retrieval.

pub mod aggregate;
pub mod bundle;
pub mod grid;
pub mod index;

pub use aggregate::{cls_aggregate, ffa_aggregate};
pub use bundle::{list_bundles, read_bundle, write_bundle, ObjectEntry, ObjectMeta, ViewRecord, DEFAULT_VIEW_COUNT};
pub use grid::PatchGrid;
pub use index::{build_index, retrieve, DescriptorIndex, DescriptorMode, Hit};
