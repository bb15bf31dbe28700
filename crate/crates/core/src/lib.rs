pub mod data;
pub mod estimators;
pub mod harness;
pub mod error;
pub mod regress;
pub mod report;
pub mod rng;
pub mod simgen;
pub mod theory;

pub use data::{load_csv, make_folds, Dataset, FoldAssignment};
pub use error::{Error, Result};
pub use report::{ImportanceReport, Method, TestResult};
pub use rng::RngStream;
