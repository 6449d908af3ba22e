//! Reproducible experiments: the cost benchmark, the time-varying oscillator
//! and the synthetic multi-channel demo.

pub mod bench;
pub mod ltv;
pub mod sensors;

pub use bench::{run_benchmark, Algorithm, BenchConfig, BenchRecord, BenchResult, Task};
pub use ltv::{run_ltv, LtvConfig};
pub use sensors::{run_synthetic_sensors, SensorConfig, Tone};
