//! Synchronous rate distribution and quick stop.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::store::AggregateStore;
use crate::controller::RateTable;
use crate::money::Money;
use crate::plan::CampaignId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BidderId(pub u32);

/// The rate vector a bidder serves with. Readers always see a whole table;
/// a push swaps the table atomically.
#[derive(Debug)]
pub struct RateBoard {
    table: RwLock<Arc<RateTable>>,
    stopped: AtomicBool,
}

impl RateBoard {
    pub fn new(table: RateTable) -> Self {
        Self { table: RwLock::new(Arc::new(table)), stopped: AtomicBool::new(false) }
    }

    pub fn current(&self) -> Arc<RateTable> {
        self.table.read().expect("rate board poisoned").clone()
    }

    fn install(&self, table: RateTable) {
        *self.table.write().expect("rate board poisoned") = Arc::new(table);
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.load(Ordering::Acquire)
    }

    fn halt(&self) {
        self.stopped.store(true, Ordering::Release);
    }
}

#[derive(Debug, Default)]
pub struct Bidder {
    pub id: BidderId,
    boards: BTreeMap<CampaignId, Arc<RateBoard>>,
}

impl Bidder {
    pub fn new(id: BidderId) -> Self {
        Self { id, boards: BTreeMap::new() }
    }

    pub fn board(&mut self, campaign: CampaignId) -> Arc<RateBoard> {
        self.boards.entry(campaign).or_insert_with(|| Arc::new(RateBoard::new(RateTable::stopped()))).clone()
    }

    pub fn rates(&self, campaign: CampaignId) -> Option<Arc<RateTable>> {
        self.boards.get(&campaign).map(|b| b.current())
    }

    pub fn is_stopped(&self, campaign: CampaignId) -> bool {
        self.boards.get(&campaign).is_some_and(|b| b.is_stopped())
    }
}

/// Injected RPC timeouts: `(bidder, push number) -> failing attempts`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub timeouts: BTreeMap<(BidderId, u64), u32>,
}

impl FaultPlan {
    /// The bidder times out on every attempt of the given push.
    pub fn always(mut self, bidder: BidderId, push: u64) -> Self {
        self.timeouts.insert((bidder, push), u32::MAX);
        self
    }

    pub fn times(mut self, bidder: BidderId, push: u64, attempts: u32) -> Self {
        self.timeouts.insert((bidder, push), attempts);
        self
    }

    fn fails(&self, bidder: BidderId, push: u64, attempt: u32) -> bool {
        self.timeouts.get(&(bidder, push)).is_some_and(|n| attempt < *n)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PushOutcome {
    pub failures: Vec<BidderId>,
    pub attempts: u32,
}

impl PushOutcome {
    pub fn all_acknowledged(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuickStopNotice {
    pub campaign: CampaignId,
    pub issued_at: u64,
    pub acknowledged: BTreeMap<BidderId, bool>,
}

/// Reference to the budgets quick stop guards, plus the notices already
/// issued.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QuickStopGuard {
    budgets: BTreeMap<CampaignId, Money>,
    issued: BTreeSet<CampaignId>,
}

impl QuickStopGuard {
    pub fn register(&mut self, campaign: CampaignId, budget: Money) {
        self.budgets.insert(campaign, budget);
    }

    pub fn issued(&self, campaign: CampaignId) -> bool {
        self.issued.contains(&campaign)
    }
}

/// Notice for `campaign` once its aggregated spend reaches the budget; at
/// most one per campaign.
pub fn check_quick_stop(
    guard: &mut QuickStopGuard,
    store: &AggregateStore,
    campaign: CampaignId,
    tick: u64,
) -> Option<QuickStopNotice> {
    let budget = *guard.budgets.get(&campaign)?;
    if guard.issued.contains(&campaign) || store.total(campaign).spend < budget {
        return None;
    }
    guard.issued.insert(campaign);
    Some(QuickStopNotice { campaign, issued_at: tick, acknowledged: BTreeMap::new() })
}

/// The synchronous side of the serving fleet.
#[derive(Debug, Default)]
pub struct Fleet {
    pub bidders: Vec<Bidder>,
    pub faults: FaultPlan,
    pub max_retries: u32,
    pushes: u64,
}

impl Fleet {
    pub fn new(num_bidders: usize, max_retries: u32, faults: FaultPlan) -> Self {
        Self {
            bidders: (0..num_bidders as u32).map(|i| Bidder::new(BidderId(i))).collect(),
            faults,
            max_retries,
            pushes: 0,
        }
    }

    /// Sends `table` to every bidder and waits for acknowledgments,
    /// retrying timed-out bidders. A bidder that never acknowledges keeps
    /// its old table.
    pub fn push_rates(&mut self, campaign: CampaignId, table: &RateTable) -> PushOutcome {
        let push = self.pushes;
        self.pushes += 1;
        let mut pending: Vec<usize> = (0..self.bidders.len()).collect();
        let mut attempts = 0;
        while !pending.is_empty() && attempts <= self.max_retries {
            pending.retain(|&i| {
                let id = self.bidders[i].id;
                if self.faults.fails(id, push, attempts) {
                    return true;
                }
                self.bidders[i].board(campaign).install(table.clone());
                false
            });
            attempts += 1;
        }
        PushOutcome { failures: pending.into_iter().map(|i| self.bidders[i].id).collect(), attempts }
    }

    /// Halts `campaign` on every bidder and records the acknowledgments.
    pub fn deliver_quick_stop(&mut self, notice: &mut QuickStopNotice) {
        for b in &mut self.bidders {
            b.board(notice.campaign).halt();
            notice.acknowledged.insert(b.id, true);
        }
    }

    pub fn is_stopped(&self, bidder: usize, campaign: CampaignId) -> bool {
        self.bidders[bidder].is_stopped(campaign)
    }
}
