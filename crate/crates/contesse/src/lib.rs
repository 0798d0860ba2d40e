pub mod basemesh;
pub mod camera;
pub mod cut;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod insert;
pub mod lift;
pub mod obj;
pub mod predicates;
pub mod render;
pub mod subdiv;
pub mod surface;
pub mod workmesh;
pub mod wso;

pub use error::{Error, Result};
