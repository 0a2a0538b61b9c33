pub mod cli;
pub mod config;
pub mod density;
pub mod dyson;
pub mod ensemble;
pub mod girko;
pub mod linalg;
pub mod quad;
pub mod report;
pub mod stability;
