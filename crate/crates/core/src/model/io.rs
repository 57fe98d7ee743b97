//! CSV formats.
//!
//! Event log: `host_id,x,y,exposure_time,infection_time,removal_time`, one row per
//! host, empty field for an event that never happened (or was censored).
//! Population: `host_id,x,y`.
//!
//! The horizon is not stored in the file. Readers take it explicitly; when absent it
//! defaults to the latest event time in the file.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::population::HostPopulation;
use super::trajectory::{HostEvents, ObservedData, Trajectory};

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    host_id: usize,
    x: f64,
    y: f64,
    #[serde(default)]
    exposure_time: Option<f64>,
    infection_time: Option<f64>,
    removal_time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PopulationRow {
    host_id: usize,
    x: f64,
    y: f64,
}

fn write_rows<W: Write>(
    out: W,
    pop: &HostPopulation,
    events: impl Iterator<Item = HostEvents>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (h, ev) in events.enumerate() {
        let [x, y] = pop.position(h);
        w.serialize(EventRow {
            host_id: h,
            x,
            y,
            exposure_time: ev.exposure,
            infection_time: ev.infection,
            removal_time: ev.removal,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_event_log<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    write_rows(out, traj.population(), traj.hosts().iter().copied())
}

pub fn write_observed<W: Write>(out: W, obs: &ObservedData) -> Result<()> {
    let events = (0..obs.len()).map(|h| HostEvents {
        exposure: None,
        infection: obs.infection(h),
        removal: obs.removal(h),
    });
    write_rows(out, obs.population(), events)
}

pub fn write_population<W: Write>(out: W, pop: &HostPopulation) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (h, &[x, y]) in pop.coords().iter().enumerate() {
        w.serialize(PopulationRow { host_id: h, x, y })?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R) -> Result<Vec<EventRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows: Vec<EventRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| r.host_id);
    for (k, r) in rows.iter().enumerate() {
        if r.host_id != k {
            return Err(Error::InvalidTrajectory(format!(
                "host ids must be dense 0..N-1; found {} at position {k}",
                r.host_id
            )));
        }
    }
    Ok(rows)
}

fn latest_time(rows: &[EventRow]) -> f64 {
    rows.iter()
        .flat_map(|r| [r.exposure_time, r.infection_time, r.removal_time])
        .flatten()
        .fold(0.0, f64::max)
}

fn population_of(rows: &[EventRow], region_side: f64) -> Result<Arc<HostPopulation>> {
    Ok(Arc::new(HostPopulation::new(
        rows.iter().map(|r| [r.x, r.y]).collect(),
        region_side,
    )?))
}

pub fn read_event_log<R: Read>(input: R, region_side: f64, t_max: Option<f64>) -> Result<Trajectory> {
    let rows = read_rows(input)?;
    let t_max = t_max.unwrap_or_else(|| latest_time(&rows));
    let pop = population_of(&rows, region_side)?;
    let hosts = rows
        .iter()
        .map(|r| HostEvents {
            exposure: r.exposure_time,
            infection: r.infection_time,
            removal: r.removal_time,
        })
        .collect();
    Trajectory::new(pop, hosts, t_max)
}

/// Reads an event log as observations; any exposure column is ignored.
pub fn read_observed<R: Read>(input: R, region_side: f64, t_max: Option<f64>) -> Result<ObservedData> {
    let rows = read_rows(input)?;
    let t_max = t_max.unwrap_or_else(|| {
        rows.iter()
            .flat_map(|r| [r.infection_time, r.removal_time])
            .flatten()
            .fold(0.0, f64::max)
    });
    let pop = population_of(&rows, region_side)?;
    ObservedData::new(
        pop,
        rows.iter().map(|r| r.infection_time).collect(),
        rows.iter().map(|r| r.removal_time).collect(),
        t_max,
    )
}

pub fn read_population<R: Read>(input: R, region_side: f64) -> Result<HostPopulation> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows: Vec<PopulationRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| r.host_id);
    if rows.iter().enumerate().any(|(k, r)| r.host_id != k) {
        return Err(Error::domain("population host ids must be dense 0..N-1"));
    }
    HostPopulation::new(rows.iter().map(|r| [r.x, r.y]).collect(), region_side)
}
