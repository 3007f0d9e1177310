// `!(x > 0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cloud;
pub mod clustering;
pub mod error;
pub mod fmat;
pub mod index;
pub mod implicit;
pub mod io;
pub mod linae;
pub mod linalg;
pub mod localfeat;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod primitives;
pub mod scalar;
pub mod spectral;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type PointCloud32 = cloud::PointCloud<f32>;
pub type PointCloud64 = cloud::PointCloud<f64>;
pub type NeighborIndex32 = index::NeighborIndex<f32>;
pub type NeighborIndex64 = index::NeighborIndex<f64>;
pub type Primitive32 = primitives::PrimitiveParams<f32>;
pub type Primitive64 = primitives::PrimitiveParams<f64>;
pub type FeatureField32 = localfeat::FeatureField<f32>;
pub type FeatureField64 = localfeat::FeatureField<f64>;
pub type Segmentation32 = clustering::Segmentation<f32>;
pub type Segmentation64 = clustering::Segmentation<f64>;
pub type PipelineConfig32 = pipeline::PipelineConfig<f32>;
pub type PipelineConfig64 = pipeline::PipelineConfig<f64>;
