//! Persistence: strict key = value configs, CSV coefficient tables with a
//! metadata sidecar, structured-points field snapshots, and the run output
//! directory. All formats are plain text and deterministic — identical
//! inputs give identical bytes, and everything written can be read back.

pub mod artifacts;
pub mod config;
pub mod snapshot;
pub mod table_io;

pub use artifacts::{write_run_artifacts, SimulationResult, SERIES_HEADER};
pub use config::{load_config, parse_config, ProfileSpec, SimulationConfig};
pub use snapshot::{
    format_snapshot, read_snapshot, write_snapshot, SnapshotData, SNAPSHOT_SCALARS,
    SNAPSHOT_VECTORS,
};
pub use table_io::{read_table, table_columns, write_table};
