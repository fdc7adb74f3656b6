use std::path::PathBuf;

use super::ape::{ape, ApeStats};
use super::dataset::Dataset;
use super::report::{estimate_trajectory, write_reports, Summary, TimingSummary};
use super::simulate::simulate_dataset;
use crate::config::{Config, PipelineConfig, RunMode};
use crate::geometry::Pose;
use crate::pipeline::{FrameReport, LidarFrame, OdometryState};
use crate::preprocess::LidarFeed;
use crate::sim::TrajectorySample;
use crate::{Error, Result};

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<FrameReport>,
    pub estimate: Vec<TrajectorySample>,
    pub ground_truth: Vec<TrajectorySample>,
    pub ape: Option<ApeStats>,
    pub summary: Summary,
    pub timing: TimingSummary,
}

/// Feeds a dataset through one pipeline instance, a frame at a time.
pub struct Runner<'a> {
    dataset: &'a Dataset,
    state: OdometryState,
    feeds: Vec<LidarFeed>,
    next: usize,
    reports: Vec<FrameReport>,
}

impl<'a> Runner<'a> {
    /// Starts the pipeline at the identity pose. Lidar extrinsics come from
    /// the dataset.
    pub fn new(config: PipelineConfig, dataset: &'a Dataset) -> Result<Self> {
        let feeds = dataset.meta.feeds()?;
        let mut state = OdometryState::new(config)?;
        state.bootstrap(Pose::identity())?;
        Ok(Self {
            dataset,
            state,
            feeds,
            next: 0,
            reports: Vec::with_capacity(dataset.len()),
        })
    }

    pub fn state(&self) -> &OdometryState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut OdometryState {
        &mut self.state
    }

    pub fn reports(&self) -> &[FrameReport] {
        &self.reports
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.dataset.len()
    }

    /// Processes the next frame. `None` once the dataset is exhausted.
    pub fn step(&mut self) -> Result<Option<&FrameReport>> {
        if self.is_done() {
            return Ok(None);
        }
        let frame = self.dataset.frame(self.next)?;
        let lidar_frames: Vec<LidarFrame> = self
            .feeds
            .iter()
            .zip(frame.clouds)
            .map(|(feed, cloud)| {
                let mut feed = feed.clone();
                feed.last_msg_time = frame.scan_end;
                LidarFrame {
                    feed,
                    cloud,
                    scan_start: frame.scan_start,
                    scan_end: frame.scan_end,
                }
            })
            .collect();
        let imu = self.dataset.imu_between(frame.scan_start, frame.scan_end);
        let prior = self.dataset.prior(self.next);
        let report = self
            .state
            .process_scan(&lidar_frames, imu, prior.as_ref(), frame.scan_end)
            .map_err(|e| match e {
                Error::Dataset { .. } => e,
                other => Error::Pipeline(format!("frame {}: {other}", frame.index)),
            })?;
        self.next += 1;
        self.reports.push(report);
        Ok(self.reports.last())
    }

    pub fn finish(mut self) -> Result<RunOutput> {
        while self.step()?.is_some() {}
        let backend = self.state.config().map.backend.to_string();
        let estimate = estimate_trajectory(&self.reports);
        let ground_truth = self.dataset.ground_truth.clone();
        let ape = if ground_truth.is_empty() || estimate.is_empty() {
            None
        } else {
            Some(
                ape(&estimate, &ground_truth)
                    .map_err(|e| Error::dataset(PathBuf::from("gt.csv"), e.to_string()))?,
            )
        };
        let summary = Summary::of(&self.reports, ape, &backend);
        let timing = TimingSummary::of(&self.reports);
        Ok(RunOutput {
            reports: self.reports,
            estimate,
            ground_truth,
            ape,
            summary,
            timing,
        })
    }
}

/// The dataset a configuration describes: simulated, or read from disk.
pub fn load_dataset(config: &Config) -> Result<Dataset> {
    match config.run.mode {
        RunMode::Simulate => simulate_dataset(config),
        RunMode::Replay => {
            let dir =
                config.run.dataset.as_ref().ok_or_else(|| {
                    Error::Config("run.dataset is required in replay mode".into())
                })?;
            Dataset::open(dir)
        }
    }
}

/// Runs a configuration end to end and writes its reports to `run.out`.
/// In simulate mode the generated dataset is also saved when
/// `run.save_dataset` is set.
pub fn run(config: &Config) -> Result<RunOutput> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    if let (RunMode::Simulate, Some(dir)) = (config.run.mode, &config.run.save_dataset) {
        dataset.write(dir)?;
    }
    let out = Runner::new(config.pipeline(), &dataset)?.finish()?;
    write_reports(
        &config.run.out,
        &out.reports,
        &out.ground_truth,
        &out.summary,
        &out.timing,
    )?;
    Ok(out)
}

/// Process exit code for an error: 2 for configuration, 3 for dataset
/// problems, 4 for anything that failed while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Dataset { .. } => 3,
        _ => 4,
    }
}
