//! Typed tabular data: schemas, datasets, numeric encoding, schema
//! alignment, deterministic splits, and seeded synthetic data.

mod align;
mod dataset;
mod encode;
mod schema;
mod synth;

pub use align::{align, AlignmentMap};
pub use dataset::{load_csv, Dataset, LoadReport, RowRejection, Value};
pub use encode::{argmax_lowest, decode, decode_generated, encode, EncodedMatrix, EncodingLayout};
pub use schema::{ColumnKind, ColumnSpec, Schema};
pub use synth::{synth_generate, SynthColumn, SynthRole, SynthSpec};
