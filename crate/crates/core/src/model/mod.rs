//! Domain types shared by every other module.

mod io;
mod kernel;
mod params;
mod population;
mod rates;
mod trajectory;

pub use io::{
    read_event_log, read_observed, read_population, write_event_log, write_observed,
    write_population,
};
pub use kernel::{KernelFamily, KernelSpec};
pub use params::{ModelParams, Param, Sojourn};
pub use population::{HostId, HostPopulation, DEFAULT_DISTANCE_CAP};
pub use rates::{exposure_rate, kernel_sum, total_pressure};
pub use trajectory::{window_count, HostEvents, ObservedData, Trajectory};

