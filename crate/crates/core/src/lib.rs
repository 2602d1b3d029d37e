pub mod command;
pub mod executive;
pub mod kinematics;
pub mod link;
pub mod planner;
pub mod scene;
pub mod service;
pub mod sim;
pub mod wire;
