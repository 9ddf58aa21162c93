pub mod ingest;
pub mod loso;
pub mod pipeline;
pub mod report;
pub mod synth;
