pub mod config;
pub mod data;
pub mod evidential;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod dynamics;
pub mod selection;
