//! Refinement of LoD1/LoD2 semantic building models to LoD3 using labeled
//! mobile laser scans.
//!
//! Rays from sensor origins to scanned points are cast through a voxel grid.
//! Where rays pass through a modeled wall the wall is *conflicted*, where
//! they end on it the wall is *confirmed*. Conflict probabilities, point
//! label votes and optional texture classifications are projected onto each
//! wall plane, fused per pixel, and turned into rectangular facade element
//! instances. Openings are cut into the wall and filled with fitted library
//! objects; installations are attached. Every existing identifier survives.
//!
//! | module | role |
//! |---|---|
//! | [`geom`] | wall frames, polygon predicates, rectangle hole cutting |
//! | [`model`] | `.cm.json` building models, CityGML 2.0 export, validation |
//! | [`cloud`] | labeled point clouds (`.lpc`) and label mappings |
//! | [`visibility`] | voxel ray casting and conflict classification |
//! | [`maps`] | wall-plane probability rasters and PGM export |
//! | [`fusion`] | per-pixel naive Bayes and instance extraction |
//! | [`reconstruct`] | hole cutting and library object fitting |
//! | [`embed`] | CityGML class mapping and model updates |
//! | [`pipeline`] | the whole refinement run |
//! | [`synthetic`] | seeded test scenes |

pub mod cloud;
pub mod embed;
pub mod fusion;
pub mod geom;
pub mod maps;
pub mod model;
pub mod pipeline;
pub mod reconstruct;
pub mod synthetic;
pub mod visibility;

pub use cloud::{FacadeClass, LabeledPointCloud};
pub use geom::{Point3, PolygonWithHoles, Rect2, Vec3, WallFrame};
pub use model::BuildingModel;
pub use pipeline::{refine, RunConfig};
