//! Plain CSV tables with a fixed header and 9 significant digits per value,
//! so files from two runs can be compared with `diff`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::geometry::Pose;
use crate::preprocess::ImuSample;
use crate::sim::TrajectorySample;
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 8] = ["t", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];
pub const IMU_HEADER: [&str; 7] = ["t", "wx", "wy", "wz", "ax", "ay", "az"];

/// Formats `v` with 9 significant digits: fixed notation for magnitudes in
/// `[1e-5, 1e9)`, scientific otherwise.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent present") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..9).contains(&exp) {
        format!("{v:.*}", (8 - exp) as usize)
    } else {
        sci
    }
}

/// Writes rows of numbers under `header`.
pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| sig9(*v)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table, checking the header names. Every failure is
/// reported as a dataset error against `path`.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    let found = r
        .headers()
        .map_err(|e| Error::dataset(path, e.to_string()))?;
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(Error::dataset(
            path,
            format!(
                "expected header {}, found {}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::dataset(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::dataset(path, format!("row {}: {e}", line + 2)))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::dataset(
                path,
                format!("row {}: non-finite value", line + 2),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn pose_row(timestamp: f64, pose: &Pose) -> Vec<f64> {
    let t = pose.translation();
    let q = pose.rotation().coords;
    vec![timestamp, t.x, t.y, t.z, q.x, q.y, q.z, q.w]
}

/// Parses `tx, ty, tz, qx, qy, qz, qw`. The quaternion is normalized.
pub fn pose_from_fields(f: &[f64]) -> Option<Pose> {
    let q = Quaternion::new(f[6], f[3], f[4], f[5]);
    if q.norm() < 1e-6 {
        return None;
    }
    Some(Pose::new(
        UnitQuaternion::from_quaternion(q),
        Vector3::new(f[0], f[1], f[2]),
    ))
}

pub fn write_trajectory(path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    write_table(
        path,
        &TRAJECTORY_HEADER,
        samples.iter().map(|s| pose_row(s.timestamp, &s.pose)),
    )
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectorySample>> {
    read_table(path, &TRAJECTORY_HEADER)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let pose = pose_from_fields(&row[1..])
                .ok_or_else(|| Error::dataset(path, format!("row {}: zero quaternion", i + 2)))?;
            Ok(TrajectorySample {
                timestamp: row[0],
                pose,
            })
        })
        .collect()
}

pub fn write_imu(path: &Path, imu: &[ImuSample]) -> Result<()> {
    write_table(
        path,
        &IMU_HEADER,
        imu.iter().map(|s| {
            let (w, a) = (s.angular_velocity, s.linear_acceleration);
            vec![s.timestamp, w.x, w.y, w.z, a.x, a.y, a.z]
        }),
    )
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>> {
    Ok(read_table(path, &IMU_HEADER)?
        .into_iter()
        .map(|r| ImuSample {
            timestamp: r[0],
            angular_velocity: Vector3::new(r[1], r[2], r[3]),
            linear_acceleration: Vector3::new(r[4], r[5], r[6]),
        })
        .collect())
}

/// Writes free-form rows whose fields are already formatted.
pub fn write_text_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
