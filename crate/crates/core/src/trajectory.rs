use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::PoseSE3;

/// Timestamped world-frame poses with strictly increasing stamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<PoseSE3>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return Err(Error::param(format!("{} stamps for {} poses", stamps.len(), poses.len())));
        }
        if let Some(i) = stamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::param(format!("timestamps not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { stamps, poses })
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &PoseSE3)> {
        self.stamps.iter().copied().zip(self.poses.iter())
    }

    /// A copy with every pose left-multiplied by `t`.
    pub fn transformed(&self, t: &PoseSE3) -> Self {
        Self {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
        }
    }

    pub fn to_tum_string(&self) -> String {
        let mut s = String::new();
        for (t, p) in self.iter() {
            let q = p.quaternion_xyzw();
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                t, p.translation.x, p.translation.y, p.translation.z, q[0], q[1], q[2], q[3]
            );
        }
        s
    }

    pub fn write_tum(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tum_string()).map_err(|e| Error::io(path, e))
    }

    /// Reads `timestamp tx ty tz qx qy qz qw` lines; `#` comments are skipped.
    pub fn read_tum(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut stamps = Vec::new();
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|_| err(format!("cannot parse {f:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 8 {
                return Err(err(format!("expected 8 fields, found {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            stamps.push(v[0]);
            poses.push(PoseSE3::from_parts([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]]));
        }
        Self::new(stamps, poses).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }
}
