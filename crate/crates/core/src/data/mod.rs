//! Interaction logs: CSV ingestion, 5-core filtering, chronological
//! leave-one-out splitting, a synthetic generator, and batching.

mod batch;
mod csv_io;
mod dataset;
mod filter;
mod synth;

pub use batch::{make_batches, Split};
pub use csv_io::{export_csv, ingest_csv, Ingested, Record};
pub use dataset::{leave_one_out_split, InteractionDataset};
pub use filter::five_core_filter;
pub use synth::{synth_generate, SynthParams};
