pub mod kg;
pub mod ingest;
pub mod qgen;
pub mod harness;
pub mod assess;
pub mod report;
pub mod cli;
