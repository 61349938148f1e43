//! Frame sequences and their on-disk layout: `NNNNNN.xyz` frames,
//! `groundtruth.txt` (TUM) and `manifest.txt` (key=value).

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{read_xyz, write_xyz, PointCloud};
use crate::kv::KeyValues;
use crate::trajectory::Trajectory;

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// An ordered sequence of sensor-frame scans with capture timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub frames: Vec<PointCloud>,
    pub stamps: Vec<f64>,
}

impl Dataset {
    pub fn new(frames: Vec<PointCloud>, stamps: Vec<f64>) -> Result<Self> {
        if frames.len() != stamps.len() {
            return Err(Error::param(format!("{} frames for {} timestamps", frames.len(), stamps.len())));
        }
        Ok(Self { frames, stamps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Writes frames, and optionally ground truth and a manifest, into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, ground_truth: Option<&Trajectory>, manifest: Option<&KeyValues>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, f) in self.frames.iter().enumerate() {
            write_xyz(dir.join(frame_name(i)), f)?;
        }
        if let Some(gt) = ground_truth {
            gt.write_tum(dir.join(GROUNDTRUTH_FILE))?;
        }
        if let Some(m) = manifest {
            m.write(dir.join(MANIFEST_FILE))?;
        }
        Ok(())
    }

    /// Loads every `*.xyz` frame in `dir` in name order. Timestamps come from
    /// `groundtruth.txt` when present, otherwise from the manifest `frame_rate`
    /// (10 Hz if absent).
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Option<Trajectory>)> {
        let dir = dir.as_ref();
        let mut names: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
            .collect();
        names.sort();
        let frames = names.iter().map(read_xyz).collect::<Result<Vec<_>>>()?;
        let gt_path = dir.join(GROUNDTRUTH_FILE);
        let gt = if gt_path.exists() {
            Some(Trajectory::read_tum(&gt_path)?)
        } else {
            None
        };
        let stamps = match &gt {
            Some(gt) if gt.len() == frames.len() => gt.stamps().to_vec(),
            Some(gt) => {
                return Err(Error::param(format!(
                    "{}: {} ground-truth poses for {} frames",
                    dir.display(),
                    gt.len(),
                    frames.len()
                )))
            }
            None => {
                let manifest = dir.join(MANIFEST_FILE);
                let rate = if manifest.exists() {
                    KeyValues::read(&manifest)?.parse_value::<f64>("frame_rate")?.unwrap_or(10.0)
                } else {
                    10.0
                };
                (0..frames.len()).map(|i| i as f64 / rate).collect()
            }
        };
        Ok((Self { frames, stamps }, gt))
    }
}

pub fn frame_name(i: usize) -> String {
    format!("{i:06}.xyz")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::pose::PoseSE3;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![
            PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap(),
            PointCloud::new(vec![Point3::new(4.0, 5.0, 6.0)]).unwrap(),
        ];
        let ds = Dataset::new(frames, vec![0.0, 0.1]).unwrap();
        let gt = Trajectory::new(vec![0.0, 0.1], vec![PoseSE3::identity(); 2]).unwrap();
        ds.save(dir.path(), Some(&gt), None).unwrap();
        let (back, gt_back) = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(gt_back.unwrap().len(), 2);
        assert!(dir.path().join("000001.xyz").exists());
    }
}
