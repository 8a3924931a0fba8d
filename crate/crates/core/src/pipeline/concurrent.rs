//! Threaded schedule: one thread per producer, one consumer thread owning
//! the store. Producers never wait on the consumer.

use std::thread;

use crossbeam_channel::unbounded;

use super::message::{Batch, Producer, ProducerId};
use super::store::AggregateStore;
use super::PipelineConfig;
use crate::error::{PacingError, Result};
use crate::sim::DeliveryEvent;

/// Timestamped deliveries of one producer, in tick order.
pub type EventStream = Vec<(u64, DeliveryEvent)>;

fn batches_for(id: ProducerId, events: &[(u64, DeliveryEvent)], cfg: &PipelineConfig, mut sink: impl FnMut(Batch)) {
    let mut producer = Producer::new(id, cfg.max_batch, cfg.flush_timeout_ticks, cfg.micro_aggregation);
    let mut current = None;
    for (tick, event) in events {
        if let Some(prev) = current {
            for t in prev..*tick {
                if let Some(b) = producer.end_tick(t) {
                    sink(b);
                }
            }
        }
        current = Some(*tick);
        if let Some(b) = producer.enqueue(event, *tick) {
            sink(b);
        }
    }
    if let Some(b) = producer.flush(current.unwrap_or(0)) {
        sink(b);
    }
}

/// Reference schedule: producers run one after another on this thread.
pub fn run_sequential(streams: &[EventStream], cfg: &PipelineConfig) -> Result<AggregateStore> {
    let mut store = AggregateStore::new(cfg.window_slots);
    let mut err = None;
    for (i, events) in streams.iter().enumerate() {
        batches_for(ProducerId(i as u32), events, cfg, |b| {
            if let Err(e) = store.aggregate(&b) {
                err.get_or_insert(e);
            }
        });
    }
    err.map_or(Ok(store), Err)
}

/// Same work with every producer on its own thread feeding a consumer
/// thread over an unbounded channel.
pub fn run_threaded(streams: &[EventStream], cfg: &PipelineConfig) -> Result<AggregateStore> {
    let (tx, rx) = unbounded::<Batch>();
    let window = cfg.window_slots;
    thread::scope(|scope| {
        let consumer = scope.spawn(move || -> Result<AggregateStore> {
            let mut store = AggregateStore::new(window);
            for batch in rx {
                store.aggregate(&batch)?;
            }
            Ok(store)
        });
        for (i, events) in streams.iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move || {
                batches_for(ProducerId(i as u32), events, cfg, |b| {
                    // the consumer only hangs up after an error it will report
                    let _ = tx.send(b);
                });
            });
        }
        drop(tx);
        consumer.join().map_err(|_| PacingError::Invariant("consumer thread panicked".into()))?
    })
}
