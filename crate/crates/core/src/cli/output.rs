//! CSV artifacts: per-snapshot field dumps, `times.csv` and the per-step
//! extremes log. Numbers are written with the shortest representation that
//! parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::mesh::{Field, Grid};
use crate::model::State;
use crate::timestep::{Snapshot, StepRecord, Trajectory};

pub const TIMES_FILE: &str = "times.csv";
pub const MONITOR_FILE: &str = "monitor.csv";
const MONITOR_HEADER: &str = "step,time,min_T,min_I,min_V,sup_T,sup_I,sup_V";

/// Shortest round-trip text for `v`, in exponent form when plain decimal
/// would be long.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Zero-padding width for snapshot file names, at least six digits.
pub fn step_width(last_step: usize) -> usize {
    last_step.to_string().len().max(6)
}

pub fn snapshot_name(step: usize, width: usize) -> String {
    format!("snap_{step:0width$}.csv")
}

fn coordinate_header(grid: &Grid) -> &'static str {
    if grid.dim() == 1 {
        "node_index,x"
    } else {
        "node_index,x,y"
    }
}

/// Node table with the given named columns.
pub fn node_table(grid: &Grid, columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from(coordinate_header(grid));
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for j in 0..grid.len() {
        let x = grid.coordinates(j);
        write!(out, "{j},{}", num(x[0])).unwrap();
        if grid.dim() == 2 {
            write!(out, ",{}", num(x[1])).unwrap();
        }
        for (_, values) in columns {
            write!(out, ",{}", num(values[j])).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn snapshot_csv(state: &State) -> String {
    node_table(
        state.grid(),
        &[
            ("T", state.target.values()),
            ("I", state.infected.values()),
            ("V", state.virions.values()),
        ],
    )
}

pub fn times_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from("step,time\n");
    for s in snapshots {
        writeln!(out, "{},{}", s.step, num(s.time())).unwrap();
    }
    out
}

pub fn monitor_csv(log: &[StepRecord]) -> String {
    let mut out = format!("{MONITOR_HEADER}\n");
    for r in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            num(r.time),
            num(r.min_t),
            num(r.min_i),
            num(r.min_v),
            num(r.sup_t),
            num(r.sup_i),
            num(r.sup_v)
        )
        .unwrap();
    }
    out
}

/// Writes snapshots, `times.csv` and `monitor.csv`; returns the paths.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> std::io::Result<Vec<PathBuf>> {
    let last = traj.snapshots.last().map_or(0, |s| s.step);
    let width = step_width(last);
    let mut written = Vec::with_capacity(traj.snapshots.len() + 2);
    for snap in &traj.snapshots {
        let path = dir.join(snapshot_name(snap.step, width));
        fs::write(&path, snapshot_csv(&snap.state))?;
        written.push(path);
    }
    let times = dir.join(TIMES_FILE);
    fs::write(&times, times_csv(&traj.snapshots))?;
    written.push(times);
    let monitor = dir.join(MONITOR_FILE);
    fs::write(&monitor, monitor_csv(&traj.monitor_log))?;
    written.push(monitor);
    Ok(written)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn read(path: &Path) -> Result<String, ReadError> {
    fs::read_to_string(path).map_err(|source| ReadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a CSV body into rows of numbers, checking the header.
fn parse_rows(path: &Path, expected_header: &str) -> Result<Vec<Vec<f64>>, ReadError> {
    let text = read(path)?;
    let bad = |line: usize, message: String| ReadError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != expected_header {
        return Err(bad(
            1,
            format!("expected header `{expected_header}`, found `{header}`"),
        ));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|e| bad(i + 2, format!("`{cell}`: {e}")))
                })
                .collect()
        })
        .collect()
}

/// Reloads the output of a simulation run on `grid`.
pub fn read_trajectory(dir: &Path, grid: Arc<Grid>) -> Result<Trajectory, ReadError> {
    let times_path = dir.join(TIMES_FILE);
    let times = parse_rows(&times_path, "step,time")?;
    let last = times.last().map_or(0.0, |r| r[0]) as usize;
    let width = step_width(last);
    let header = format!("{},T,I,V", coordinate_header(&grid));
    let offset = grid.dim() + 1;
    let mut snapshots = Vec::with_capacity(times.len());
    for (i, row) in times.iter().enumerate() {
        if row.len() != 2 {
            return Err(ReadError::Format {
                path: times_path.clone(),
                line: i + 2,
                message: "expected 2 columns".into(),
            });
        }
        let step = row[0] as usize;
        let path = dir.join(snapshot_name(step, width));
        let rows = parse_rows(&path, &header)?;
        if rows.len() != grid.len() || rows.iter().any(|r| r.len() != offset + 3) {
            return Err(ReadError::Format {
                path,
                line: 0,
                message: format!("expected {} rows of {} columns", grid.len(), offset + 3),
            });
        }
        let column =
            |c: usize| Field::new(grid.clone(), rows.iter().map(|r| r[offset + c]).collect());
        let fields = (column(0), column(1), column(2));
        let (Ok(target), Ok(infected), Ok(virions)) = fields else {
            return Err(ReadError::Format {
                path,
                line: 0,
                message: "non-finite value".into(),
            });
        };
        snapshots.push(Snapshot {
            step,
            state: State {
                time: row[1],
                target,
                infected,
                virions,
            },
        });
    }
    if snapshots.is_empty() {
        return Err(ReadError::Format {
            path: times_path,
            line: 1,
            message: "no snapshots listed".into(),
        });
    }
    let monitor_path = dir.join(MONITOR_FILE);
    let monitor_rows = parse_rows(&monitor_path, MONITOR_HEADER)?;
    if let Some(i) = monitor_rows.iter().position(|r| r.len() != 8) {
        return Err(ReadError::Format {
            path: monitor_path,
            line: i + 2,
            message: "expected 8 columns".into(),
        });
    }
    let monitor_log: Vec<StepRecord> = monitor_rows
        .into_iter()
        .map(|r| StepRecord {
            step: r[0] as usize,
            time: r[1],
            min_t: r[2],
            min_i: r[3],
            min_v: r[4],
            sup_t: r[5],
            sup_i: r[6],
            sup_v: r[7],
        })
        .collect();
    // the first step is never shortened unless it is the only one
    let dt = monitor_log
        .first()
        .map_or(0.0, |r| r.time - snapshots[0].time());
    Ok(Trajectory {
        dt,
        snapshots,
        monitor_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;

    #[test]
    fn numbers_are_short_and_exact() {
        assert_eq!(num(1e-300), "1e-300");
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(-0.0), "-0");
        for v in [
            1.0 / 3.0,
            4.113636394641566e-10,
            6.02e23,
            f64::MIN_POSITIVE,
            1e-5,
            9.99e15,
        ] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn names_are_padded() {
        assert_eq!(snapshot_name(10, step_width(100)), "snap_000010.csv");
        assert_eq!(
            snapshot_name(5, step_width(12_345_678)),
            "snap_00000005.csv"
        );
    }

    #[test]
    fn values_roundtrip_exactly() {
        let g = Arc::new(Grid::rect([1.0, 0.5], [4, 3], Boundary::Neumann).unwrap());
        let s = State::new(
            0.1,
            Field::from_fn(g.clone(), |x| (x[0] * 7.0).exp() / 3.0),
            Field::from_fn(g.clone(), |x| 1e-300 * x[1]),
            Field::from_fn(g.clone(), |x| 0.1 + x[0] + x[1]),
        )
        .unwrap();
        let csv = snapshot_csv(&s);
        assert!(csv.starts_with("node_index,x,y,T,I,V\n"));
        for (line, j) in csv.lines().skip(1).zip(0..) {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert_eq!(cells[3], s.target.values()[j]);
            assert_eq!(cells[4], s.infected.values()[j]);
            assert_eq!(cells[5], s.virions.values()[j]);
        }
    }
}
