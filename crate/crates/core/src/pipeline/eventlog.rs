//! Append-only binary dump of delivery messages for offline inspection.
//!
//! The file starts with an 8-byte magic, followed by 48-byte little-endian
//! records: producer u32, campaign u32, slot u32, bucket u32, cost in
//! micro-units i64, impressions u64, clicks u64, sequence u64.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::message::{Batch, DeliveryMessage, ProducerId};
use crate::error::{PacingError, Result};
use crate::money::Money;
use crate::plan::CampaignId;
use crate::slot::CtrBucket;

pub const MAGIC: &[u8; 8] = b"PACELOG1";
pub const RECORD_LEN: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub producer: ProducerId,
    pub message: DeliveryMessage,
}

impl EventRecord {
    pub fn encode(&self) -> [u8; RECORD_LEN] {
        let m = &self.message;
        let mut out = [0u8; RECORD_LEN];
        out[0..4].copy_from_slice(&self.producer.0.to_le_bytes());
        out[4..8].copy_from_slice(&m.campaign.0.to_le_bytes());
        out[8..12].copy_from_slice(&m.slot.to_le_bytes());
        out[12..16].copy_from_slice(&m.bucket.0.to_le_bytes());
        out[16..24].copy_from_slice(&m.cost.micros().to_le_bytes());
        out[24..32].copy_from_slice(&m.impressions.to_le_bytes());
        out[32..40].copy_from_slice(&m.clicks.to_le_bytes());
        out[40..48].copy_from_slice(&m.seq.to_le_bytes());
        out
    }

    pub fn decode(buf: &[u8; RECORD_LEN]) -> Self {
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        EventRecord {
            producer: ProducerId(u32_at(0)),
            message: DeliveryMessage {
                campaign: CampaignId(u32_at(4)),
                slot: u32_at(8),
                bucket: CtrBucket(u32_at(12)),
                cost: Money::from_micros(u64_at(16) as i64),
                impressions: u64_at(24),
                clicks: u64_at(32),
                seq: u64_at(40),
            },
        }
    }
}

pub struct EventLogWriter {
    out: BufWriter<File>,
    written: u64,
}

impl EventLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().write(true).create(true).truncate(true).open(path)?;
        let mut out = BufWriter::new(file);
        out.write_all(MAGIC)?;
        Ok(Self { out, written: 0 })
    }

    pub fn append(&mut self, batch: &Batch) -> Result<()> {
        for m in &batch.messages {
            self.out.write_all(&EventRecord { producer: batch.producer, message: *m }.encode())?;
            self.written += 1;
        }
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_event_log(path: &Path) -> Result<Vec<EventRecord>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PacingError::Io(format!("{} is not an event log", path.display())));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % RECORD_LEN != 0 {
        return Err(PacingError::Io(format!("{} ends with a partial record", path.display())));
    }
    Ok(bytes
        .chunks_exact(RECORD_LEN)
        .map(|c| EventRecord::decode(c.try_into().unwrap()))
        .collect())
}
