//! Per-period trial log and its CSV form.
//!
//! Columns, in order: `time_s, fx, fy, fz, tx, ty, tz, fx_true, fy_true,
//! fz_true, tx_true, ty_true, tz_true, px, py, pz, qw, qx, qy, qz,
//! cmd_0 … cmd_{n-1}, mode`. Wrenches are the interaction wrench in the base
//! frame, the pose is the true probe pose. Floats use the shortest
//! representation that parses back to the same bits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::config::ConfigError;
use crate::controller::{ControlMode, Wrench};
use crate::error::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub wrench_meas: Wrench<f64>,
    pub wrench_true: Wrench<f64>,
    pub tip_position: Vector3<f64>,
    pub tip_orientation: UnitQuaternion<f64>,
    pub command: Vec<f64>,
    /// Plant joint angles; not part of the CSV.
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTrace {
    pub mode: ControlMode,
    pub rows: Vec<TraceRow>,
    /// Controller faults, `(time, message)`; the held command was used.
    pub faults: Vec<(f64, String)>,
}

const FIXED: [&str; 20] = [
    "time_s", "fx", "fy", "fz", "tx", "ty", "tz", "fx_true", "fy_true", "fz_true", "tx_true", "ty_true", "tz_true",
    "px", "py", "pz", "qw", "qx", "qy", "qz",
];

impl TimeSeriesTrace {
    pub fn new(mode: ControlMode) -> Self {
        Self::with_capacity(mode, 0)
    }

    pub fn with_capacity(mode: ControlMode, n: usize) -> Self {
        TimeSeriesTrace {
            mode,
            rows: Vec::with_capacity(n),
            faults: Vec::new(),
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub(crate) fn note_fault(&mut self, time: f64, e: &Error) {
        self.faults.push((time, e.to_string()));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    /// Measured force projected on `dir`.
    pub fn measured_along(&self, dir: &Vector3<f64>) -> Vec<f64> {
        self.rows.iter().map(|r| r.wrench_meas.force.dot(dir)).collect()
    }

    pub fn true_along(&self, dir: &Vector3<f64>) -> Vec<f64> {
        self.rows.iter().map(|r| r.wrench_true.force.dot(dir)).collect()
    }

    pub fn header(&self) -> String {
        let dof = self.rows.first().map_or(0, |r| r.command.len());
        let mut h = FIXED.join(",");
        for i in 0..dof {
            write!(h, ",cmd_{i}").unwrap();
        }
        h.push_str(",mode");
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            let q = r.tip_orientation.quaternion();
            let fixed = [
                r.time,
                r.wrench_meas.force.x,
                r.wrench_meas.force.y,
                r.wrench_meas.force.z,
                r.wrench_meas.torque.x,
                r.wrench_meas.torque.y,
                r.wrench_meas.torque.z,
                r.wrench_true.force.x,
                r.wrench_true.force.y,
                r.wrench_true.force.z,
                r.wrench_true.torque.x,
                r.wrench_true.torque.y,
                r.wrench_true.torque.z,
                r.tip_position.x,
                r.tip_position.y,
                r.tip_position.z,
                q.w,
                q.i,
                q.j,
                q.k,
            ];
            // Shortest round-trip form, so re-reading gives the same bits.
            write!(line, "{}", fixed[0]).unwrap();
            for v in fixed[1..].iter().chain(r.command.iter()) {
                write!(line, ",{v:e}").unwrap();
            }
            write!(line, ",{}", self.mode).unwrap();
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Parses a trace written by [`TimeSeriesTrace::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ConfigError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty trace file".into()))?;
        let header = header.map_err(|e| parse_err(1, e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < FIXED.len() + 1 || cols[..FIXED.len()] != FIXED || cols.last() != Some(&"mode") {
            return Err(parse_err(1, "unexpected trace header".into()));
        }
        let dof = cols.len() - FIXED.len() - 1;
        for (i, c) in cols[FIXED.len()..FIXED.len() + dof].iter().enumerate() {
            if *c != format!("cmd_{i}") {
                return Err(parse_err(1, format!("expected cmd_{i}, found {c}")));
            }
        }

        let mut trace: Option<TimeSeriesTrace> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(parse_err(lineno, format!("expected {} fields, found {}", cols.len(), fields.len())));
            }
            let mut v = Vec::with_capacity(fields.len() - 1);
            for f in &fields[..fields.len() - 1] {
                v.push(
                    f.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("not a number: {f}")))?,
                );
            }
            let mode: ControlMode = fields[fields.len() - 1]
                .parse()
                .map_err(|e: String| parse_err(lineno, e))?;
            let t = trace.get_or_insert_with(|| TimeSeriesTrace::new(mode));
            if t.mode != mode {
                return Err(parse_err(lineno, "mode changes within a trace".into()));
            }
            let w = |o: usize| {
                Wrench::new(
                    Vector3::new(v[o], v[o + 1], v[o + 2]),
                    Vector3::new(v[o + 3], v[o + 4], v[o + 5]),
                )
            };
            t.push(TraceRow {
                time: v[0],
                wrench_meas: w(1),
                wrench_true: w(7),
                tip_position: Vector3::new(v[13], v[14], v[15]),
                // Stored quaternions are already unit; keep the bits as written.
                tip_orientation: UnitQuaternion::new_unchecked(Quaternion::new(v[16], v[17], v[18], v[19])),
                command: v[FIXED.len()..].to_vec(),
                q: Vec::new(),
            });
        }
        trace.ok_or_else(|| parse_err(2, "trace has no rows".into()))
    }
}

fn parse_err(line: usize, message: String) -> ConfigError {
    ConfigError::Parse {
        line: Some(line),
        column: None,
        message,
    }
}
