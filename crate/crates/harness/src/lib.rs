pub mod metrics;
pub mod records;
pub mod runner;
pub mod scenario;
pub mod source;
pub mod summary;
pub mod verify;
