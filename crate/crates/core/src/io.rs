//! CSV file formats exchanged between stages.
//!
//! | file | header |
//! |------|--------|
//! | trajectories | `traj_id,frame,x,y` |
//! | parameter tracks | `traj_id,frame,alpha,k,state` |
//! | change points | `traj_id,cp_frame` |
//! | detections | `frame,x,y,mass` |
//! | segments | `traj_id,start,end,alpha,k,state` |
//! | VIP map | `label,traj_id` |
//!
//! Files are UTF-8 with LF line endings. `frame` and `cp_frame` are absolute
//! frame numbers; segment `start`/`end` are offsets from the trajectory's
//! first frame. Rows of one trajectory must be contiguous and in frame order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::types::{
    DiffusionParams, DiffusionState, ParamTrack, Segment, SegmentedTrajectory, Trajectory,
};

pub const TRAJECTORY_HEADER: &[&str] = &["traj_id", "frame", "x", "y"];
pub const PARAM_TRACK_HEADER: &[&str] = &["traj_id", "frame", "alpha", "k", "state"];
pub const CHANGEPOINT_HEADER: &[&str] = &["traj_id", "cp_frame"];
pub const DETECTION_HEADER: &[&str] = &["frame", "x", "y", "mass"];
pub const SEGMENT_HEADER: &[&str] = &["traj_id", "start", "end", "alpha", "k", "state"];
pub const VIP_MAP_HEADER: &[&str] = &["label", "traj_id"];

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    traj_id: u64,
    frame: usize,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamRow {
    traj_id: u64,
    frame: usize,
    alpha: f64,
    k: f64,
    state: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChangepointRow {
    traj_id: u64,
    cp_frame: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRow {
    traj_id: u64,
    start: usize,
    end: usize,
    alpha: f64,
    k: f64,
    state: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct VipRow {
    label: u32,
    traj_id: u64,
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(w)
}

fn write_rows<W: Write, T: Serialize>(w: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Parses all rows after checking the header matches exactly. Each row is
/// returned with its 1-based line number.
fn read_rows<R: Read, T: DeserializeOwned>(r: R, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let found = rdr.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header '{}', found '{}'",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for result in rdr.deserialize::<T>() {
        match result {
            Ok(row) => {
                // Header is line 1, so data rows start at line 2.
                let line = out.len() as u64 + 2;
                out.push((line, row));
            }
            Err(e) => {
                let line = e.position().map_or(out.len() as u64 + 2, |p| p.line());
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Groups rows by `traj_id`, requiring each group to be contiguous and to
/// cover consecutive frames.
fn group_consecutive<T>(
    rows: Vec<(u64, T)>,
    key: impl Fn(&T) -> (u64, usize),
) -> Result<Vec<(u64, usize, Vec<T>)>> {
    let mut groups: Vec<(u64, usize, Vec<T>)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (line, row) in rows {
        let (id, frame) = key(&row);
        match groups.last_mut() {
            Some((gid, start, items)) if *gid == id => {
                let expected = *start + items.len();
                if frame != expected {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "trajectory {id}: expected frame {expected}, found {frame}"
                        ),
                    });
                }
                items.push(row);
            }
            _ => {
                if seen.insert(id, line).is_some() {
                    return Err(Error::Parse {
                        line,
                        message: format!("rows of trajectory {id} are not contiguous"),
                    });
                }
                groups.push((id, frame, vec![row]));
            }
        }
    }
    Ok(groups)
}

pub fn write_trajectories<W: Write>(w: W, trajectories: &[Trajectory]) -> Result<()> {
    let rows: Vec<_> = trajectories
        .iter()
        .flat_map(|t| {
            t.points.iter().enumerate().map(|(i, p)| TrajectoryRow {
                traj_id: t.id,
                frame: t.start_frame + i,
                x: p[0],
                y: p[1],
            })
        })
        .collect();
    write_rows(w, TRAJECTORY_HEADER, &rows)
}

pub fn read_trajectories<R: Read>(r: R, fov_id: u32) -> Result<Vec<Trajectory>> {
    let rows = read_rows::<_, TrajectoryRow>(r, TRAJECTORY_HEADER)?;
    for (line, row) in &rows {
        if !row.x.is_finite() || !row.y.is_finite() {
            return Err(Error::Parse {
                line: *line,
                message: "non-finite coordinate".into(),
            });
        }
    }
    let groups = group_consecutive(rows, |r| (r.traj_id, r.frame))?;
    Ok(groups
        .into_iter()
        .map(|(id, start, rows)| Trajectory {
            id,
            start_frame: start,
            points: rows.into_iter().map(|r| [r.x, r.y]).collect(),
            fov_id,
        })
        .collect())
}

pub fn write_param_tracks<W: Write>(w: W, tracks: &[ParamTrack]) -> Result<()> {
    let mut rows = Vec::new();
    for t in tracks {
        for i in 0..t.len() {
            rows.push(ParamRow {
                traj_id: t.traj_id,
                frame: t.start_frame + i,
                alpha: t.alpha[i],
                k: t.k[i],
                state: t.state[i].code(),
            });
        }
    }
    write_rows(w, PARAM_TRACK_HEADER, &rows)
}

/// Parses a parameter-track table, rejecting out-of-range values with the
/// offending line number.
pub fn read_param_tracks<R: Read>(r: R) -> Result<Vec<ParamTrack>> {
    let rows = read_rows::<_, ParamRow>(r, PARAM_TRACK_HEADER)?;
    for (line, row) in &rows {
        let problem = if DiffusionState::try_from(row.state).is_err() {
            Some(format!("state {} outside 0..=3", row.state))
        } else if !(row.alpha.is_finite() && row.alpha > 0.0 && row.alpha <= 2.0) {
            Some(format!("alpha {} outside (0, 2]", row.alpha))
        } else if !(row.k.is_finite() && row.k >= 0.0) {
            Some(format!("K {} negative or non-finite", row.k))
        } else {
            None
        };
        if let Some(message) = problem {
            return Err(Error::Parse {
                line: *line,
                message,
            });
        }
    }
    let groups = group_consecutive(rows, |r| (r.traj_id, r.frame))?;
    Ok(groups
        .into_iter()
        .map(|(id, start, rows)| ParamTrack {
            traj_id: id,
            start_frame: start,
            alpha: rows.iter().map(|r| r.alpha).collect(),
            k: rows.iter().map(|r| r.k).collect(),
            state: rows
                .iter()
                .map(|r| DiffusionState::try_from(r.state).expect("checked above"))
                .collect(),
        })
        .collect())
}

/// Writes change points as absolute frames; `changepoints[i]` holds offsets
/// into `trajectories[i]`.
pub fn write_changepoints<W: Write>(
    w: W,
    trajectories: &[Trajectory],
    changepoints: &[Vec<usize>],
) -> Result<()> {
    let rows: Vec<_> = trajectories
        .iter()
        .zip(changepoints)
        .flat_map(|(t, cps)| {
            cps.iter().map(move |&c| ChangepointRow {
                traj_id: t.id,
                cp_frame: t.start_frame + c,
            })
        })
        .collect();
    write_rows(w, CHANGEPOINT_HEADER, &rows)
}

/// Absolute change-point frames keyed by trajectory id.
pub fn read_changepoints<R: Read>(r: R) -> Result<BTreeMap<u64, Vec<usize>>> {
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (_, row) in read_rows::<_, ChangepointRow>(r, CHANGEPOINT_HEADER)? {
        out.entry(row.traj_id).or_default().push(row.cp_frame);
    }
    Ok(out)
}

pub fn write_detections<W: Write>(w: W, detections: &[Detection]) -> Result<()> {
    write_rows(w, DETECTION_HEADER, detections)
}

pub fn read_detections<R: Read>(r: R) -> Result<Vec<Detection>> {
    Ok(read_rows::<_, Detection>(r, DETECTION_HEADER)?
        .into_iter()
        .map(|(_, d)| d)
        .collect())
}

pub fn write_segments<W: Write>(w: W, trajectories: &[SegmentedTrajectory]) -> Result<()> {
    let rows: Vec<_> = trajectories
        .iter()
        .flat_map(|t| {
            t.segments.iter().map(|s| SegmentRow {
                traj_id: t.traj_id,
                start: s.start,
                end: s.end,
                alpha: s.params.alpha,
                k: s.params.k,
                state: s.state.code(),
            })
        })
        .collect();
    write_rows(w, SEGMENT_HEADER, &rows)
}

pub fn read_segments<R: Read>(r: R) -> Result<Vec<SegmentedTrajectory>> {
    let rows = read_rows::<_, SegmentRow>(r, SEGMENT_HEADER)?;
    let mut out: Vec<SegmentedTrajectory> = Vec::new();
    for (line, row) in rows {
        let parse_err = |message: String| Error::Parse { line, message };
        let state = DiffusionState::try_from(row.state).map_err(parse_err)?;
        let params = DiffusionParams::new(row.alpha, row.k)
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let seg = Segment {
            start: row.start,
            end: row.end,
            params,
            state,
        };
        match out.last_mut() {
            Some(t) if t.traj_id == row.traj_id => {
                if t.len() != seg.start || seg.end <= seg.start {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "segment [{}, {}) of trajectory {} does not continue at {}",
                            seg.start,
                            seg.end,
                            row.traj_id,
                            t.len()
                        ),
                    });
                }
                t.segments.push(seg);
            }
            _ => {
                if seg.start != 0 || seg.end == 0 || out.iter().any(|t| t.traj_id == row.traj_id)
                {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "trajectory {} must start with a non-empty segment at 0 and be contiguous",
                            row.traj_id
                        ),
                    });
                }
                out.push(SegmentedTrajectory {
                    traj_id: row.traj_id,
                    segments: vec![seg],
                });
            }
        }
    }
    Ok(out)
}

pub fn write_vip_map<W: Write>(w: W, map: &BTreeMap<u32, u64>) -> Result<()> {
    let rows: Vec<_> = map
        .iter()
        .map(|(&label, &traj_id)| VipRow { label, traj_id })
        .collect();
    write_rows(w, VIP_MAP_HEADER, &rows)
}

pub fn read_vip_map<R: Read>(r: R) -> Result<BTreeMap<u32, u64>> {
    Ok(read_rows::<_, VipRow>(r, VIP_MAP_HEADER)?
        .into_iter()
        .map(|(_, row)| (row.label, row.traj_id))
        .collect())
}

/// Opens a file for buffered reading with the path attached to errors.
pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}
