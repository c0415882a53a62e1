use std::fs::File;
use std::path::Path;

use crate::dynamics::{Forcing, Model, State};
use crate::integrator::Observer;
use crate::norms_energy::{energy_budget, v_norms};
use crate::Result;

/// Column order of the time-series CSV.
pub const COLUMNS: [&str; 10] = [
    "t",
    "l2_v",
    "l2_T",
    "l2_q",
    "v1_v",
    "v2_T",
    "v3_q",
    "dtU_l2",
    "budget_residual",
    "constraint_residual",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeseriesRow {
    pub t: f64,
    pub l2_v: f64,
    pub l2_t: f64,
    pub l2_q: f64,
    pub v1_v: f64,
    pub v2_t: f64,
    pub v3_q: f64,
    pub dtu_l2: f64,
    /// `dE/dt + D - W`.
    pub budget_residual: f64,
    /// `|∫₀¹ div v dξ|₂`.
    pub constraint_residual: f64,
}

impl TimeseriesRow {
    pub fn compute(model: &Model, state: &State, forcing: &Forcing) -> Result<Self> {
        let n = v_norms(model, state, forcing)?;
        let b = energy_budget(model, state, forcing)?;
        Ok(Self {
            t: state.time,
            l2_v: n.l2_v,
            l2_t: n.l2_t,
            l2_q: n.l2_q,
            v1_v: n.v1_v,
            v2_t: n.v2_t,
            v3_q: n.v3_q,
            dtu_l2: n.dtu_l2,
            budget_residual: b.residual,
            constraint_residual: model.constraint_residual(&state.v),
        })
    }

    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.l2_v,
            self.l2_t,
            self.l2_q,
            self.v1_v,
            self.v2_t,
            self.v3_q,
            self.dtu_l2,
            self.budget_residual,
            self.constraint_residual,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        Self {
            t: v[0],
            l2_v: v[1],
            l2_t: v[2],
            l2_q: v[3],
            v1_v: v[4],
            v2_t: v[5],
            v3_q: v[6],
            dtu_l2: v[7],
            budget_residual: v[8],
            constraint_residual: v[9],
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_timeseries(rows: &[TimeseriesRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(r.values().map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(crate::Error::Param(format!(
            "unexpected time-series header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut v = [0.0; 10];
        for (x, s) in v.iter_mut().zip(rec.iter()) {
            *x = s
                .parse()
                .map_err(|_| crate::Error::Param(format!("bad number {s:?} in {}", path.display())))?;
        }
        rows.push(TimeseriesRow::from_values(v));
    }
    Ok(rows)
}

/// Streams one row per observed state to a CSV file, flushing on finish.
pub struct TimeseriesWriter<'a> {
    model: &'a Model,
    forcing: &'a Forcing,
    out: csv::Writer<File>,
    pub rows: Vec<TimeseriesRow>,
}

impl<'a> TimeseriesWriter<'a> {
    pub fn create(model: &'a Model, forcing: &'a Forcing, path: &Path) -> Result<Self> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(COLUMNS)?;
        Ok(Self {
            model,
            forcing,
            out,
            rows: Vec::new(),
        })
    }
}

impl Observer for TimeseriesWriter<'_> {
    fn observe(&mut self, _step: u64, state: &State) -> Result<()> {
        let row = TimeseriesRow::compute(self.model, state, self.forcing)?;
        self.out.write_record(row.values().map(fmt_f64))?;
        self.rows.push(row);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
