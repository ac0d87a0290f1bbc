use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CostObservation;
use crate::error::{Error, Result};
use crate::numeric::{fmt_num, mean, parse_row};
use crate::rng::RngKey;
use crate::simulators::{SimOutput, Simulator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Wall,
    #[default]
    Virtual,
}

/// Mean cost at one parameter value, with the simulator outputs kept for reuse.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredCost {
    pub theta: Vec<f64>,
    pub y_seconds: f64,
    pub y_virtual: f64,
    pub outputs: Vec<SimOutput>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostMeasurement {
    pub records: Vec<MeasuredCost>,
    /// Parameter values at which the simulator failed, with the message.
    pub failures: Vec<(Vec<f64>, String)>,
}

impl CostMeasurement {
    pub fn observations(&self, clock: Clock) -> Vec<CostObservation> {
        self.records
            .iter()
            .map(|r| {
                let y = match clock {
                    Clock::Wall => r.y_seconds,
                    Clock::Virtual => r.y_virtual,
                };
                CostObservation::new(r.theta.clone(), y)
            })
            .collect()
    }
}

/// Runs `reps` simulations at each parameter value. Run `(i, r)` draws from
/// the stream keyed by `(i, r)`, so results do not depend on scheduling.
pub fn measure_cost(sim: &Simulator, thetas: &[Vec<f64>], reps: usize, key: RngKey) -> Result<CostMeasurement> {
    if reps == 0 {
        return Err(Error::config("measure_cost needs reps ≥ 1"));
    }
    let runs: Vec<Result<SimOutput>> = (0..thetas.len() * reps)
        .into_par_iter()
        .map(|idx| {
            let (i, r) = (idx / reps, idx % reps);
            sim.simulate(&thetas[i], key.child(i as u64).child(r as u64))
        })
        .collect();

    let mut out = CostMeasurement::default();
    for (i, chunk) in runs.chunks(reps).enumerate() {
        let mut outputs = Vec::with_capacity(reps);
        let mut failure = None;
        for run in chunk {
            match run {
                Ok(o) => outputs.push(o.clone()),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(msg) = failure {
            log::warn!("simulator failed at θ = {:?}: {msg}", thetas[i]);
            out.failures.push((thetas[i].clone(), msg));
            continue;
        }
        let secs: Vec<f64> = outputs.iter().map(|o| o.wall_seconds).collect();
        let virt: Vec<f64> = outputs.iter().map(|o| o.virtual_cost as f64).collect();
        out.records.push(MeasuredCost {
            theta: thetas[i].clone(),
            y_seconds: mean(&secs),
            y_virtual: mean(&virt),
            outputs,
        });
    }
    Ok(out)
}

/// Writes `theta_0..theta_{p-1},y_seconds,y_virtual` rows.
pub fn write_observations_csv<W: Write>(writer: W, records: &[MeasuredCost]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = records.first().map(|r| r.theta.len()).unwrap_or(0);
    let mut header: Vec<String> = (0..dim).map(|d| format!("theta_{d}")).collect();
    header.push("y_seconds".into());
    header.push("y_virtual".into());
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.theta.iter().map(|t| fmt_num(*t)).collect();
        row.push(fmt_num(r.y_seconds));
        row.push(fmt_num(r.y_virtual));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_observations_csv`]; lines starting with `#` are skipped.
pub fn read_observations_csv<R: Read>(reader: R) -> Result<Vec<MeasuredCost>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let dim = headers.iter().filter(|h| h.starts_with("theta_")).count();
    if headers.len() != dim + 2 || headers.get(dim) != Some("y_seconds") || headers.get(dim + 1) != Some("y_virtual") {
        return Err(Error::Parse(format!("unexpected observation header {headers:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let vals = parse_row(&row)?;
        out.push(MeasuredCost {
            theta: vals[..dim].to_vec(),
            y_seconds: vals[dim],
            y_virtual: vals[dim + 1],
            outputs: Vec::new(),
        });
    }
    Ok(out)
}
