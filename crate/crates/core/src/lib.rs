pub mod delaunay;
pub mod error;
pub mod harness;
pub mod io;
pub mod kfold;
pub mod metrics;
pub mod model;
pub mod morph;
pub mod printscan;
pub mod report;
