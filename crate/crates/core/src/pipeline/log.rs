//! Commit log and snapshots for recovering the aggregate store.

use serde::{Deserialize, Serialize};

use super::message::Batch;
use super::store::AggregateStore;
use crate::error::{PacingError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub offset: u64,
    /// Tick at which the consumer received the batch.
    pub tick: u64,
    pub batch: Batch,
}

/// Append-only record of every batch handed to the consumer, in arrival
/// order. Entries before `start` may have been truncated away.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitLog {
    start: u64,
    entries: Vec<LogEntry>,
}

impl CommitLog {
    pub fn append(&mut self, tick: u64, batch: Batch) -> u64 {
        let offset = self.end();
        self.entries.push(LogEntry { offset, tick, batch });
        offset
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    /// Offset the next entry will get.
    pub fn end(&self) -> u64 {
        self.start + self.entries.len() as u64
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Entries in `[from, to)`.
    pub fn range(&self, from: u64, to: u64) -> Result<&[LogEntry]> {
        if from < self.start {
            return Err(PacingError::MissingLogSegment { snapshot_offset: from, log_start: self.start });
        }
        let lo = (from - self.start) as usize;
        let hi = ((to.min(self.end())) - self.start) as usize;
        Ok(&self.entries[lo..hi.max(lo)])
    }

    /// Drops entries before `offset`.
    pub fn truncate_before(&mut self, offset: u64) {
        let n = (offset.saturating_sub(self.start) as usize).min(self.entries.len());
        self.entries.drain(..n);
        self.start += n as u64;
    }

    /// Offset of the first entry received after `tick`.
    pub fn end_at_tick(&self, tick: u64) -> u64 {
        self.start + self.entries.partition_point(|e| e.tick <= tick) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Log offset the snapshot reflects: entries before it are included.
    pub offset: u64,
    pub tick: u64,
    pub store: AggregateStore,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Keep only the newest snapshot and truncate the log behind it.
    #[default]
    Latest,
    /// Keep every snapshot and the whole log.
    Full,
}

/// Rebuilds the store as of log offset `upto` from `snapshot` plus the log
/// tail.
pub fn recover(snapshot: &Snapshot, log: &CommitLog, upto: u64) -> Result<AggregateStore> {
    if upto < snapshot.offset {
        return Err(PacingError::Invariant(format!(
            "recovery target {upto} precedes snapshot offset {}",
            snapshot.offset
        )));
    }
    let mut store = snapshot.store.clone();
    for entry in log.range(snapshot.offset, upto)? {
        store.aggregate(&entry.batch)?;
    }
    Ok(store)
}

/// Consumer-side durability: write-ahead log plus periodic snapshots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Journal {
    pub log: CommitLog,
    pub snapshots: Vec<Snapshot>,
    pub snapshot_every: u64,
    pub retention: Retention,
    since_snapshot: u64,
}

impl Journal {
    /// `snapshot_every` is in batches; 0 disables periodic snapshots.
    pub fn new(snapshot_every: u64, retention: Retention, initial: &AggregateStore) -> Self {
        Self {
            log: CommitLog::default(),
            snapshots: vec![Snapshot { offset: 0, tick: 0, store: initial.clone() }],
            snapshot_every,
            retention,
            since_snapshot: 0,
        }
    }

    pub fn record(&mut self, tick: u64, batch: &Batch) -> u64 {
        self.log.append(tick, batch.clone())
    }

    /// Called after the store has applied the last recorded batch.
    pub fn after_apply(&mut self, tick: u64, store: &AggregateStore) {
        self.since_snapshot += 1;
        if self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every {
            self.snapshot(tick, store);
        }
    }

    pub fn snapshot(&mut self, tick: u64, store: &AggregateStore) {
        self.since_snapshot = 0;
        let snap = Snapshot { offset: self.log.end(), tick, store: store.clone() };
        match self.retention {
            Retention::Latest => {
                self.log.truncate_before(snap.offset);
                self.snapshots.clear();
            }
            Retention::Full => {}
        }
        self.snapshots.push(snap);
    }

    /// Store state right after the consumer finished `tick`, rebuilt from
    /// the newest snapshot taken at or before it.
    pub fn recover_at(&self, tick: u64) -> Result<AggregateStore> {
        let upto = self.log.end_at_tick(tick);
        let snap = self
            .snapshots
            .iter()
            .rev()
            .find(|s| s.offset <= upto && s.tick <= tick)
            .ok_or(PacingError::NoSnapshot(tick))?;
        recover(snap, &self.log, upto)
    }

    /// Replays the log up to `upto` onto the snapshot at `snapshot_index`.
    pub fn recover_from(&self, snapshot_index: usize, upto: u64) -> Result<AggregateStore> {
        let snap = self.snapshots.get(snapshot_index).ok_or(PacingError::NoSnapshot(upto))?;
        recover(snap, &self.log, upto)
    }
}
