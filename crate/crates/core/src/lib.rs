//! Camera selection for large-scale multi-view stereo.
//!
//! A posed sparse reconstruction is split into overlapping spatial blocks.
//! Each block gets the cameras that see it, and a small integer program picks
//! the fewest cameras that still cover every block point and stay matchable
//! with each other. Geometry is generic over `f32`/`f64`; the aliases below
//! fix it to `f64`.

pub mod associate;
pub mod bench;
pub mod cli;
pub mod grid;
pub mod ingest;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod select;
pub mod synth;
pub mod visibility;

pub use model::{CameraId, PointId};

pub type Scene = model::Scene<f64>;
pub type Camera = model::Camera<f64>;
pub type Point3 = model::Point3<f64>;
pub type Cluster = grid::Cluster<f64>;
pub type GridConfig = grid::GridConfig<f64>;
pub type AssociationConfig = associate::AssociationConfig<f64>;
pub type PipelineConfig = pipeline::PipelineConfig<f64>;
