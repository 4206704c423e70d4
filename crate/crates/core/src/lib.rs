pub mod collision;
pub mod geom;
pub mod grid;
pub mod matcher;
pub mod planner;
pub mod polygon;
pub mod primitives;
pub mod scenario;
pub mod tracking;
pub mod world;
