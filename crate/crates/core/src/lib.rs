pub mod agent;
pub mod geometry;
pub mod goal;
pub mod parts;
pub mod perception;
pub mod planner;
pub mod rules;
pub mod store;
pub mod support;
pub mod world;
