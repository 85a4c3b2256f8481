//! Synthetic benchmarks: the copy-memory problem and system identification.

pub mod container;
pub mod copy;
pub mod sysid;

pub use container::{read_dataset, write_dataset};
pub use copy::{copy_baseline, gen_copy_batch, CopySpec};
pub use sysid::{gen_sysid_dataset, gen_sysid_system, nmse, SysIdSystem, SystemOrigin};
