//! On-disk dataset layout:
//!
//! ```text
//! meta.json          lidar models, extrinsics, frame count and timing
//! scans/000000.bin   one block per lidar: u32 count, then count x (f32 x, y, z, t)
//! imu.csv            t, wx, wy, wz, ax, ay, az
//! gt.csv             t, tx, ty, tz, qx, qy, qz, qw   (pose at each scan end)
//! prior.csv          frame, t, tx, ty, tz, qx, qy, qz, qw   (optional)
//! ```
//!
//! All binary values are little-endian. Point times are offsets from the
//! scan start. Scan `i` covers `[t0 + i * period, t0 + (i + 1) * period]`.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csvio::{self, pose_from_fields, pose_row};
use crate::config::Extrinsic;
use crate::geometry::{Point3, PointCloud, Pose};
use crate::pipeline::ExternalPrior;
use crate::preprocess::{ImuSample, LidarFeed};
use crate::sim::{LidarModel, TrajectorySample};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const PRIOR_HEADER: [&str; 9] = ["frame", "t", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];
const RECORD_BYTES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarMeta {
    pub id: String,
    pub model: LidarModel,
    pub extrinsic: Extrinsic,
    pub timeout_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub lidars: Vec<LidarMeta>,
    pub frames: usize,
    pub t0: f64,
    pub scan_period: f64,
    /// Label carried by every prior in `prior.csv`.
    pub prior_source: Option<String>,
    pub description: String,
}

impl DatasetMeta {
    pub fn scan_interval(&self, frame: usize) -> (f64, f64) {
        let start = self.t0 + self.scan_period * frame as f64;
        (start, start + self.scan_period)
    }

    pub fn feeds(&self) -> Result<Vec<LidarFeed>> {
        self.lidars
            .iter()
            .map(|l| LidarFeed::new(l.id.clone(), l.extrinsic.pose(), l.timeout_s))
            .collect()
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| -> Result<()> { Err(Error::dataset(path, msg)) };
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "unsupported format version {}",
                self.format_version
            ));
        }
        if self.lidars.is_empty() {
            return bad("no lidars listed".into());
        }
        if !(self.scan_period > 0.0 && self.t0.is_finite()) {
            return bad(format!(
                "bad scan timing t0 = {}, period = {}",
                self.t0, self.scan_period
            ));
        }
        for l in &self.lidars {
            l.model
                .validate()
                .or_else(|e| bad(format!("lidar {:?}: {e}", l.id)))?;
            if let Err(e) = LidarFeed::new(l.id.clone(), l.extrinsic.pose(), l.timeout_s) {
                bad(format!("lidar {:?}: {e}", l.id))?;
            }
        }
        Ok(())
    }
}

/// One sweep from every lidar, in `meta.lidars` order.
#[derive(Clone, Debug)]
pub struct SensorFrame {
    pub index: usize,
    pub scan_start: f64,
    pub scan_end: f64,
    pub clouds: Vec<PointCloud>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorRecord {
    pub frame: usize,
    pub timestamp: f64,
    /// Previous body pose to this frame's body pose.
    pub delta: Pose,
}

/// Produces the scans of a dataset on demand.
pub trait ScanSource: Send {
    fn scan(&self, frame: usize) -> Result<Vec<PointCloud>>;
}

struct DiskScans {
    dir: PathBuf,
    lidars: usize,
}

impl ScanSource for DiskScans {
    fn scan(&self, frame: usize) -> Result<Vec<PointCloud>> {
        read_scan(&scan_path(&self.dir, frame), self.lidars)
    }
}

/// A dataset whose scans are loaded or generated one frame at a time.
pub struct Dataset {
    pub meta: DatasetMeta,
    pub imu: Vec<ImuSample>,
    pub ground_truth: Vec<TrajectorySample>,
    pub priors: Vec<PriorRecord>,
    scans: Box<dyn ScanSource>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("meta", &self.meta)
            .field("imu", &self.imu.len())
            .field("ground_truth", &self.ground_truth.len())
            .field("priors", &self.priors.len())
            .finish()
    }
}

impl Dataset {
    pub fn new(
        meta: DatasetMeta,
        imu: Vec<ImuSample>,
        ground_truth: Vec<TrajectorySample>,
        priors: Vec<PriorRecord>,
        scans: Box<dyn ScanSource>,
    ) -> Self {
        Self {
            meta,
            imu,
            ground_truth,
            priors,
            scans,
        }
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path)
            .map_err(|e| Error::dataset(&meta_path, e.to_string()))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| Error::dataset(&meta_path, e.to_string()))?;
        meta.validate(&meta_path)?;

        let imu = csvio::read_imu(&dir.join("imu.csv"))?;
        if imu.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::dataset(
                dir.join("imu.csv"),
                "timestamps must be strictly increasing",
            ));
        }
        let ground_truth = csvio::read_trajectory(&dir.join("gt.csv"))?;
        let prior_path = dir.join("prior.csv");
        let priors = if prior_path.exists() {
            read_priors(&prior_path, meta.frames)?
        } else {
            Vec::new()
        };
        for i in 0..meta.frames {
            let p = scan_path(dir, i);
            if !p.is_file() {
                return Err(Error::dataset(p, "missing scan file"));
            }
        }
        let lidars = meta.lidars.len();
        Ok(Self::new(
            meta,
            imu,
            ground_truth,
            priors,
            Box::new(DiskScans {
                dir: dir.to_path_buf(),
                lidars,
            }),
        ))
    }

    pub fn len(&self) -> usize {
        self.meta.frames
    }

    pub fn is_empty(&self) -> bool {
        self.meta.frames == 0
    }

    pub fn frame(&self, index: usize) -> Result<SensorFrame> {
        if index >= self.meta.frames {
            return Err(Error::invalid(format!(
                "frame {index} out of range (dataset has {})",
                self.meta.frames
            )));
        }
        let (scan_start, scan_end) = self.meta.scan_interval(index);
        Ok(SensorFrame {
            index,
            scan_start,
            scan_end,
            clouds: self.scans.scan(index)?,
        })
    }

    /// IMU samples covering `[start, end]`, including one on each side when
    /// available.
    pub fn imu_between(&self, start: f64, end: f64) -> &[ImuSample] {
        let lo = self
            .imu
            .partition_point(|s| s.timestamp < start)
            .saturating_sub(1);
        let hi = (self.imu.partition_point(|s| s.timestamp <= end) + 1).min(self.imu.len());
        &self.imu[lo..hi.max(lo)]
    }

    pub fn prior(&self, frame: usize) -> Option<ExternalPrior> {
        let i = self.priors.binary_search_by_key(&frame, |p| p.frame).ok()?;
        let p = &self.priors[i];
        let source = self
            .meta
            .prior_source
            .clone()
            .unwrap_or_else(|| "prior".into());
        ExternalPrior::new(p.delta, source, p.timestamp).ok()
    }

    /// Writes the whole dataset under `dir`, producing scans one at a time.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("scans"))?;
        fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&self.meta).map_err(std::io::Error::other)?,
        )?;
        csvio::write_imu(&dir.join("imu.csv"), &self.imu)?;
        csvio::write_trajectory(&dir.join("gt.csv"), &self.ground_truth)?;
        if !self.priors.is_empty() {
            csvio::write_table(
                &dir.join("prior.csv"),
                &PRIOR_HEADER,
                self.priors.iter().map(|p| {
                    let mut row = vec![p.frame as f64];
                    row.extend(pose_row(p.timestamp, &p.delta));
                    row
                }),
            )?;
        }
        for i in 0..self.meta.frames {
            write_scan(&scan_path(dir, i), &self.scans.scan(i)?)?;
        }
        Ok(())
    }
}

pub fn scan_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join("scans").join(format!("{frame:06}.bin"))
}

/// Rounds points and time offsets to the on-disk `f32` precision.
pub fn quantize(cloud: &PointCloud) -> PointCloud {
    let points = cloud
        .points()
        .iter()
        .map(|p| p.map(|v| v as f32 as f64))
        .collect();
    let mut out = PointCloud::new(points).with_frame_id(cloud.frame_id());
    if let Some(t) = cloud.timestamps() {
        out = out
            .with_timestamps(t.iter().map(|&v| v as f32 as f64).collect())
            .expect("same length");
    }
    out
}

pub fn write_scan(path: &Path, clouds: &[PointCloud]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for cloud in clouds {
        let count = u32::try_from(cloud.len())
            .map_err(|_| Error::invalid("scan too large for the dataset format"))?;
        w.write_all(&count.to_le_bytes())?;
        let stamps = cloud.timestamps();
        for (i, p) in cloud.points().iter().enumerate() {
            let t = stamps.map_or(0.0, |s| s[i]);
            for v in [p.x, p.y, p.z, t] {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan(path: &Path, lidars: usize) -> Result<Vec<PointCloud>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::dataset(path, e.to_string()))?;
    let mut rest = bytes.as_slice();
    let mut clouds = Vec::with_capacity(lidars);
    for block in 0..lidars {
        let Some((head, tail)) = rest.split_first_chunk::<4>() else {
            return Err(Error::dataset(
                path,
                format!("truncated before block {block}"),
            ));
        };
        let count = u32::from_le_bytes(*head) as usize;
        let len = count
            .checked_mul(RECORD_BYTES)
            .filter(|&l| l <= tail.len())
            .ok_or_else(|| {
                Error::dataset(
                    path,
                    format!("block {block} declares {count} points past the end of file"),
                )
            })?;
        let (records, tail) = tail.split_at(len);
        let mut points = Vec::with_capacity(count);
        let mut stamps = Vec::with_capacity(count);
        for r in records.chunks_exact(RECORD_BYTES) {
            let f = |k: usize| {
                f32::from_le_bytes(r[4 * k..4 * k + 4].try_into().expect("4 bytes")) as f64
            };
            let (p, t) = (Point3::new(f(0), f(1), f(2)), f(3));
            if !(p.iter().all(|v| v.is_finite()) && t.is_finite()) {
                return Err(Error::dataset(
                    path,
                    format!("non-finite record in block {block}"),
                ));
            }
            points.push(p);
            stamps.push(t);
        }
        clouds.push(
            PointCloud::new(points)
                .with_timestamps(stamps)?
                .with_frame_id("sensor"),
        );
        rest = tail;
    }
    if !rest.is_empty() {
        return Err(Error::dataset(
            path,
            format!("{} trailing bytes", rest.len()),
        ));
    }
    Ok(clouds)
}

fn read_priors(path: &Path, frames: usize) -> Result<Vec<PriorRecord>> {
    let mut out: Vec<PriorRecord> = Vec::new();
    for (i, row) in csvio::read_table(path, &PRIOR_HEADER)?
        .into_iter()
        .enumerate()
    {
        let frame = row[0];
        if frame < 0.0 || frame.fract() != 0.0 || frame as usize >= frames {
            return Err(Error::dataset(
                path,
                format!("row {}: bad frame index {frame}", i + 2),
            ));
        }
        let frame = frame as usize;
        if out.last().is_some_and(|p| p.frame >= frame) {
            return Err(Error::dataset(
                path,
                "frame indices must be strictly increasing",
            ));
        }
        let delta = pose_from_fields(&row[2..])
            .ok_or_else(|| Error::dataset(path, format!("row {}: zero quaternion", i + 2)))?;
        out.push(PriorRecord {
            frame,
            timestamp: row[1],
            delta,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![
            Point3::new(1.0, -2.0, 0.5),
            Point3::new(0.0, 3.25, -1.0),
        ])
        .with_timestamps(vec![0.0, 0.05])
        .unwrap()
    }

    #[test]
    fn scan_blocks_per_lidar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_scan(&p, &[cloud(), PointCloud::default(), cloud()]).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 3 * 4 + 4 * 16);
        let back = read_scan(&p, 3).unwrap();
        assert_eq!(
            back.iter().map(PointCloud::len).collect::<Vec<_>>(),
            [2, 0, 2]
        );
        assert_eq!(back[2].points(), quantize(&cloud()).points());
        assert!(matches!(read_scan(&p, 4), Err(Error::Dataset { .. })));
        assert!(matches!(read_scan(&p, 2), Err(Error::Dataset { .. })));
    }

    #[test]
    fn truncated_scan_is_a_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_scan(&p, &[cloud()]).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_scan(&p, 1), Err(Error::Dataset { .. })));
    }

    #[test]
    fn open_reports_missing_pieces() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Dataset::open(dir.path()),
            Err(Error::Dataset { .. })
        ));
        fs::write(dir.path().join("meta.json"), "{\"format_version\": 1}").unwrap();
        assert!(matches!(
            Dataset::open(dir.path()),
            Err(Error::Dataset { .. })
        ));
    }
}
