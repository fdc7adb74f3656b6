//! Double-buffered octree map. One buffer answers queries while a
//! background worker rebuilds the other around the robot; the pipeline
//! thread swaps them once the rebuild is done.

use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Mutex;
use std::thread::JoinHandle;

use super::octree::{MapEntry, Octree};
use crate::geometry::{Normal3, Point3};
use crate::index::{Aabb, Neighbor};

/// One octree plus its point buffer.
#[derive(Debug)]
pub(crate) struct Slot {
    pub(crate) tree: Octree,
    /// Rebuild cycle that produced this structure.
    pub(crate) generation: u64,
    /// Set by the worker as its last step.
    pub(crate) complete: bool,
}

struct Job {
    slot: Slot,
    snapshot: Vec<MapEntry>,
    keep: Aabb,
    generation: u64,
}

struct Pending {
    generation: u64,
    journal: Vec<MapEntry>,
}

/// Generation bookkeeping exposed for concurrency audits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MtoStatus {
    /// Generation of the structure currently answering queries.
    pub active_generation: u64,
    /// Whether that structure finished building.
    pub active_complete: bool,
    /// Highest generation handed to the worker.
    pub requested_generation: u64,
    pub swaps: u64,
    pub rebuild_in_flight: bool,
}

pub struct MtoOctree {
    leaf_size: f64,
    active: Slot,
    inactive: Option<Slot>,
    pending: Option<Pending>,
    next_generation: u64,
    swaps: u64,
    jobs: Option<Sender<Job>>,
    // Behind a mutex only so the map can be shared read-only across threads.
    done: Mutex<Receiver<Slot>>,
    worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for MtoOctree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MtoOctree")
            .field("leaf_size", &self.leaf_size)
            .field("status", &self.status())
            .finish()
    }
}

fn worker_loop(jobs: Receiver<Job>, done: Sender<Slot>) {
    while let Ok(job) = jobs.recv() {
        let Job {
            mut slot,
            snapshot,
            keep,
            generation,
        } = job;
        slot.complete = false;
        let center = (keep.min + keep.max) / 2.0;
        let half = (keep.max - keep.min).max() / 2.0;
        slot.tree.clear(center, half);
        for e in snapshot.into_iter().filter(|e| keep.contains(&e.point)) {
            slot.tree.insert(e);
        }
        slot.generation = generation;
        slot.complete = true;
        if done.send(slot).is_err() {
            return;
        }
    }
}

impl MtoOctree {
    pub fn new(center: Point3, half_extent: f64, leaf_size: f64) -> Self {
        let (job_tx, job_rx) = mpsc::channel();
        let (done_tx, done_rx) = mpsc::channel();
        let worker = std::thread::Builder::new()
            .name("mto-rebuild".into())
            .spawn(move || worker_loop(job_rx, done_tx))
            .expect("spawn octree rebuild worker");
        let slot = |generation| Slot {
            tree: Octree::new(center, half_extent, leaf_size),
            generation,
            complete: true,
        };
        Self {
            leaf_size,
            active: slot(0),
            inactive: Some(slot(0)),
            pending: None,
            next_generation: 1,
            swaps: 0,
            jobs: Some(job_tx),
            done: Mutex::new(done_rx),
            worker: Some(worker),
        }
    }

    pub fn leaf_size(&self) -> f64 {
        self.leaf_size
    }

    pub(crate) fn insert(&mut self, e: MapEntry) {
        self.poll();
        if let Some(p) = &mut self.pending {
            p.journal.push(e);
        }
        self.active.tree.insert(e);
    }

    /// Starts rebuilding the idle buffer from the active points inside
    /// `keep`. Waits for any rebuild already in flight first.
    pub fn start_rebuild(&mut self, keep: &Aabb) {
        self.wait_for_rebuild();
        let slot = self
            .inactive
            .take()
            .expect("idle slot present when nothing is pending");
        let generation = self.next_generation;
        self.next_generation += 1;
        let job = Job {
            slot,
            snapshot: self.active.tree.entries().to_vec(),
            keep: *keep,
            generation,
        };
        self.jobs
            .as_ref()
            .expect("worker channel open")
            .send(job)
            .expect("rebuild worker alive");
        self.pending = Some(Pending {
            generation,
            journal: Vec::new(),
        });
    }

    /// Swaps in a finished rebuild if one is ready. Never blocks.
    pub fn poll(&mut self) -> bool {
        if self.pending.is_none() {
            return false;
        }
        match self.receiver().try_recv() {
            Ok(slot) => {
                self.finish(slot);
                true
            }
            Err(TryRecvError::Empty) => false,
            Err(TryRecvError::Disconnected) => panic!("rebuild worker exited"),
        }
    }

    /// Blocks until the in-flight rebuild (if any) is swapped in.
    pub fn wait_for_rebuild(&mut self) {
        if self.pending.is_some() {
            let slot = self.receiver().recv().expect("rebuild worker alive");
            self.finish(slot);
        }
    }

    fn receiver(&mut self) -> &Receiver<Slot> {
        self.done.get_mut().unwrap_or_else(|e| e.into_inner())
    }

    fn finish(&mut self, mut slot: Slot) {
        let pending = self
            .pending
            .take()
            .expect("finish without a pending rebuild");
        debug_assert_eq!(slot.generation, pending.generation);
        for e in pending.journal {
            slot.tree.insert(e);
        }
        let mut old = std::mem::replace(&mut self.active, slot);
        // The old buffer is stale now; drop its points until it is rebuilt.
        let (c, h) = (Point3::zeros(), self.leaf_size);
        old.tree.clear(c, h);
        old.complete = false;
        self.inactive = Some(old);
        self.swaps += 1;
    }

    pub fn status(&self) -> MtoStatus {
        MtoStatus {
            active_generation: self.active.generation,
            active_complete: self.active.complete,
            requested_generation: self.next_generation - 1,
            swaps: self.swaps,
            rebuild_in_flight: self.pending.is_some(),
        }
    }

    /// kNN over active points inside `filter`, plus the generation of the
    /// structure that answered.
    pub fn knn_with_generation(
        &self,
        q: &Point3,
        k: usize,
        filter: Option<&Aabb>,
    ) -> (Vec<Neighbor<Normal3>>, u64, bool) {
        (
            self.active.tree.knn(q, k, filter),
            self.active.generation,
            self.active.complete,
        )
    }

    pub fn knn(&self, q: &Point3, k: usize, filter: Option<&Aabb>) -> Vec<Neighbor<Normal3>> {
        self.active.tree.knn(q, k, filter)
    }

    pub fn radius_search(
        &self,
        q: &Point3,
        r: f64,
        filter: Option<&Aabb>,
    ) -> Vec<Neighbor<Normal3>> {
        self.active.tree.radius_search(q, r, filter)
    }

    pub fn count_inside(&self, filter: Option<&Aabb>) -> usize {
        match filter {
            Some(f) => self
                .active
                .tree
                .entries()
                .iter()
                .filter(|e| f.contains(&e.point))
                .count(),
            None => self.active.tree.len(),
        }
    }

    /// Points held in memory: the active buffer plus the journal.
    pub fn allocated(&self) -> usize {
        self.active.tree.len() + self.pending.as_ref().map_or(0, |p| p.journal.len())
    }

    pub(crate) fn active_entries(&self) -> &[MapEntry] {
        self.active.tree.entries()
    }
}

impl Drop for MtoOctree {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
