//! Datasets, CSV ingestion and result serialization.

mod dataset;
mod loader;
mod report;

pub use dataset::Dataset;
pub use loader::{load_csv, write_csv, ColumnSchema, LoadedCsv};
pub use report::{emit_report, report_json, ReportFormat};
