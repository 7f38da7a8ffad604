//! Fixed-shape, zero-padded trajectory tensors for one field of view.
//!
//! A tensor holds up to [`FOV_ROWS`] trajectories over [`FOV_FRAMES`]
//! frames. Row `r` carries trajectory `r` at its own frame offsets; every
//! other entry is zero. Inputs with fewer frames (e.g. 200-frame videos) are
//! padded at the tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Trajectory;

pub const FOV_ROWS: usize = 64;
pub const FOV_FRAMES: usize = 208;

/// Frame span of the trajectory stored in a tensor row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSpan {
    pub traj_id: u64,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FovTensor {
    fov_id: u32,
    /// Row-major `FOV_ROWS x FOV_FRAMES x 2`.
    data: Vec<f64>,
    spans: Vec<Option<RowSpan>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub frame: usize,
}

impl FovTensor {
    pub fn zeros(fov_id: u32) -> Self {
        Self {
            fov_id,
            data: vec![0.0; FOV_ROWS * FOV_FRAMES * 2],
            spans: vec![None; FOV_ROWS],
        }
    }

    /// Builds a tensor from raw parts; no invariant checks are made so that
    /// externally produced tensors can be inspected with [`validate_fov_tensor`].
    pub fn from_parts(fov_id: u32, data: Vec<f64>, spans: Vec<Option<RowSpan>>) -> Result<Self> {
        if data.len() != FOV_ROWS * FOV_FRAMES * 2 || spans.len() != FOV_ROWS {
            return Err(Error::InvalidInput(format!(
                "tensor must be {FOV_ROWS}x{FOV_FRAMES}x2 with {FOV_ROWS} row spans"
            )));
        }
        Ok(Self {
            fov_id,
            data,
            spans,
        })
    }

    pub fn fov_id(&self) -> u32 {
        self.fov_id
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn spans(&self) -> &[Option<RowSpan>] {
        &self.spans
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.spans.iter().map(Option::is_some).collect()
    }

    pub fn get(&self, row: usize, frame: usize) -> [f64; 2] {
        let i = Self::offset(row, frame);
        [self.data[i], self.data[i + 1]]
    }

    pub fn set(&mut self, row: usize, frame: usize, value: [f64; 2]) {
        let i = Self::offset(row, frame);
        self.data[i] = value[0];
        self.data[i + 1] = value[1];
    }

    fn offset(row: usize, frame: usize) -> usize {
        (row * FOV_FRAMES + frame) * 2
    }

    /// Trajectories stored in occupied rows.
    pub fn to_trajectories(&self) -> Vec<Trajectory> {
        self.spans
            .iter()
            .enumerate()
            .filter_map(|(row, span)| {
                span.map(|s| Trajectory {
                    id: s.traj_id,
                    start_frame: s.start,
                    points: (s.start..s.start + s.len)
                        .map(|f| self.get(row, f))
                        .collect(),
                    fov_id: self.fov_id,
                })
            })
            .collect()
    }

    /// Little-endian `f64` dump of the data array, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn header(&self) -> TensorHeader {
        TensorHeader {
            fov_id: self.fov_id,
            shape: [FOV_ROWS, FOV_FRAMES, 2],
            dtype: "f64le".to_string(),
            rows: self.spans.clone(),
        }
    }

    pub fn from_le_bytes(header: &TensorHeader, bytes: &[u8]) -> Result<Self> {
        if header.shape != [FOV_ROWS, FOV_FRAMES, 2] || header.dtype != "f64le" {
            return Err(Error::InvalidInput(format!(
                "unsupported tensor header shape {:?} dtype {}",
                header.shape, header.dtype
            )));
        }
        if bytes.len() != FOV_ROWS * FOV_FRAMES * 2 * 8 {
            return Err(Error::InvalidInput(format!(
                "tensor payload has {} bytes",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_parts(header.fov_id, data, header.rows.clone())
    }
}

/// JSON sidecar describing a raw tensor dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub fov_id: u32,
    pub shape: [usize; 3],
    pub dtype: String,
    pub rows: Vec<Option<RowSpan>>,
}

/// Packs up to 64 trajectories into one tensor.
pub fn to_fov_tensor(trajectories: &[Trajectory], fov_id: u32) -> Result<FovTensor> {
    if trajectories.len() > FOV_ROWS {
        return Err(Error::Capacity {
            what: "trajectories per tensor",
            got: trajectories.len(),
            max: FOV_ROWS,
        });
    }
    let mut tensor = FovTensor::zeros(fov_id);
    for (row, traj) in trajectories.iter().enumerate() {
        traj.validate()?;
        if traj.end_frame() > FOV_FRAMES {
            return Err(Error::Capacity {
                what: "trajectory end frame",
                got: traj.end_frame(),
                max: FOV_FRAMES,
            });
        }
        for (i, p) in traj.points.iter().enumerate() {
            tensor.set(row, traj.start_frame + i, *p);
        }
        tensor.spans[row] = Some(RowSpan {
            traj_id: traj.id,
            start: traj.start_frame,
            len: traj.len(),
        });
    }
    Ok(tensor)
}

/// Splits an arbitrary number of trajectories into as many tensors as
/// needed, in input order.
pub fn to_fov_tensors(trajectories: &[Trajectory], fov_id: u32) -> Result<Vec<FovTensor>> {
    if trajectories.is_empty() {
        return Ok(vec![FovTensor::zeros(fov_id)]);
    }
    trajectories
        .chunks(FOV_ROWS)
        .map(|chunk| to_fov_tensor(chunk, fov_id))
        .collect()
}

/// Lists every entry that breaks the padding invariants: non-zero values in
/// unoccupied rows or outside a row's span, plus non-finite values. An empty
/// list means the tensor is valid.
pub fn validate_fov_tensor(t: &FovTensor) -> Vec<Violation> {
    let mut out = Vec::new();
    for row in 0..FOV_ROWS {
        let span = t.spans[row];
        if let Some(s) = span {
            if s.len == 0 || s.start + s.len > FOV_FRAMES {
                out.push(Violation {
                    row,
                    frame: s.start.min(FOV_FRAMES - 1),
                });
                continue;
            }
        }
        for frame in 0..FOV_FRAMES {
            let v = t.get(row, frame);
            let inside = span.is_some_and(|s| frame >= s.start && frame < s.start + s.len);
            let bad = if inside {
                !v[0].is_finite() || !v[1].is_finite()
            } else {
                v[0] != 0.0 || v[1] != 0.0
            };
            if bad {
                out.push(Violation { row, frame });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_tensor_is_valid() {
        let t = FovTensor::zeros(0);
        assert!(t.occupancy().iter().all(|o| !o));
        assert!(validate_fov_tensor(&t).is_empty());
        let t = to_fov_tensor(&[], 0).unwrap();
        assert!(validate_fov_tensor(&t).is_empty());
    }

    #[test]
    fn stray_value_in_unoccupied_row_is_reported() {
        let mut t = FovTensor::zeros(0);
        t.set(63, 17, [1.0, 0.0]);
        let v = validate_fov_tensor(&t);
        assert_eq!(v, vec![Violation { row: 63, frame: 17 }]);
    }

    #[test]
    fn tail_padding_violation_is_reported() {
        let traj = Trajectory::new(5, 10, vec![[1.0, 1.0]; 4], 0).unwrap();
        let mut t = to_fov_tensor(&[traj], 0).unwrap();
        t.set(0, 14, [0.5, 0.5]);
        assert_eq!(
            validate_fov_tensor(&t),
            vec![Violation { row: 0, frame: 14 }]
        );
    }

    #[test]
    fn capacity_is_enforced() {
        let trajs: Vec<_> = (0..65)
            .map(|i| Trajectory::new(i, 0, vec![[1.0, 1.0]], 0).unwrap())
            .collect();
        assert!(matches!(
            to_fov_tensor(&trajs, 0),
            Err(Error::Capacity { .. })
        ));
        let split = to_fov_tensors(&trajs, 0).unwrap();
        assert_eq!(split.len(), 2);
        assert_eq!(split[1].to_trajectories().len(), 1);
        let long = Trajectory::new(0, 200, vec![[1.0, 1.0]; 9], 0).unwrap();
        assert!(to_fov_tensor(&[long], 0).is_err());
    }

    #[test]
    fn bytes_round_trip() {
        let traj = Trajectory::new(2, 3, vec![[1.25, -4.0], [0.0, 0.0]], 7).unwrap();
        let t = to_fov_tensor(&[traj], 7).unwrap();
        let back = FovTensor::from_le_bytes(&t.header(), &t.to_le_bytes()).unwrap();
        assert_eq!(back, t);
    }

    fn trajectories() -> impl Strategy<Value = Vec<Trajectory>> {
        prop::collection::vec(
            (0usize..200).prop_flat_map(|start| {
                let max_len = FOV_FRAMES - start;
                (
                    Just(start),
                    prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..=max_len),
                )
            }),
            0..=FOV_ROWS,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (start, pts))| Trajectory {
                    id: i as u64,
                    start_frame: start,
                    points: pts.into_iter().map(|(x, y)| [x, y]).collect(),
                    fov_id: 1,
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tensor_round_trip_is_exact(trajs in trajectories()) {
            let t = to_fov_tensor(&trajs, 1).unwrap();
            prop_assert!(validate_fov_tensor(&t).is_empty());
            prop_assert_eq!(t.to_trajectories(), trajs);
        }
    }
}
