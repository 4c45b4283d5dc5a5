pub mod generate;
pub mod instance;
pub mod layout;
pub mod osm;
pub mod pipeline;
pub mod placement;
pub mod planner;
pub mod retrieval;
pub mod scene;
