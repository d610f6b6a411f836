pub mod cli;
pub mod executor;
pub mod harness;
pub mod idm;
pub mod lowlevel;
pub mod metrics;
pub mod nnet;
pub mod planner;
pub mod smoother;
pub mod world;
