//! Cumulative balance and in-degree ledgers, and the rich-get-richer tests.
//!
//! Each year the ledgers absorb that year's edge set (self-loops included),
//! the fee shares paid by spending addresses and the coinbase credits:
//!
//! ```text
//! b_t(v) = Σ w1(u,v) − Σ w1(v,u) − α_t(v) + β_t(v) + b_{t−1}(v)
//! i_t(v) = Σ w2(u,v) + (coinbase credits to v) + i_{t−1}(v)
//! ```
//!
//! Balances can go negative when the dust filter removes an address's
//! incoming edges but not its spending, or by a few quanta of attribution
//! rounding; they are kept as is and counted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::ingest::AddressId;
use crate::money::Quanta;
use crate::snapshot::AggregatedEdge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RichKind {
    Balance,
    Indegree,
}

impl fmt::Display for RichKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RichKind::Balance => "balance",
            RichKind::Indegree => "indegree",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WealthError {
    #[error("ledger is at year {cursor}; cannot advance to {requested}")]
    OutOfOrder { cursor: i32, requested: i32 },
    #[error("balances sum to {found:?}, expected issued − fees = {expected:?}")]
    Conservation { found: Quanta, expected: Quanta },
    #[error("ledger is empty")]
    Empty,
    #[error("network total is not positive")]
    NonPositiveTotal,
    #[error("label file line {line}: {reason}")]
    Labels { line: usize, reason: String },
}

/// Everything that moves the ledgers in one year.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct YearActivity {
    pub year: i32,
    /// The year's edge set, self-loops included.
    pub edges: Vec<AggregatedEdge>,
    /// Fee paid per spending address (α).
    pub fees: BTreeMap<AddressId, Quanta>,
    /// Coinbase value and number of credits per address (β).
    pub coinbase: BTreeMap<AddressId, (Quanta, u64)>,
}

#[derive(Debug, Clone, Default)]
pub struct WealthLedgers {
    balance: Vec<i128>,
    indegree: Vec<u64>,
    present: Vec<bool>,
    population: usize,
    year: Option<i32>,
    issued: Quanta,
    fees_total: Quanta,
    last_fees: BTreeMap<AddressId, Quanta>,
    last_coinbase: BTreeMap<AddressId, Quanta>,
}

impl WealthLedgers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn year(&self) -> Option<i32> {
        self.year
    }

    fn touch(&mut self, id: AddressId) -> usize {
        let i = id.0 as usize;
        if i >= self.present.len() {
            self.present.resize(i + 1, false);
            self.balance.resize(i + 1, 0);
            self.indegree.resize(i + 1, 0);
        }
        if !self.present[i] {
            self.present[i] = true;
            self.population += 1;
        }
        i
    }

    /// Applies year `activity.year`, which must follow the cursor by one.
    pub fn advance_year(&mut self, activity: &YearActivity) -> Result<(), WealthError> {
        if let Some(cursor) = self.year {
            if activity.year != cursor + 1 {
                return Err(WealthError::OutOfOrder {
                    cursor,
                    requested: activity.year,
                });
            }
        }
        for e in &activity.edges {
            let s = self.touch(e.src);
            self.balance[s] -= e.w1.0;
            let d = self.touch(e.dst);
            self.balance[d] += e.w1.0;
            self.indegree[d] += e.w2;
        }
        for (&id, &fee) in &activity.fees {
            let i = self.touch(id);
            self.balance[i] -= fee.0;
            self.fees_total += fee;
        }
        for (&id, &(value, count)) in &activity.coinbase {
            let i = self.touch(id);
            self.balance[i] += value.0;
            self.indegree[i] += count;
            self.issued += value;
        }
        self.last_fees = activity.fees.clone();
        self.last_coinbase = activity.coinbase.iter().map(|(&a, &(v, _))| (a, v)).collect();
        self.year = Some(activity.year);
        self.check_conservation()
    }

    pub fn check_conservation(&self) -> Result<(), WealthError> {
        let found = Quanta(self.balance.iter().sum());
        let expected = self.issued - self.fees_total;
        if found == expected {
            Ok(())
        } else {
            Err(WealthError::Conservation { found, expected })
        }
    }

    /// Addresses that have appeared in any ledger event so far.
    pub fn population(&self) -> usize {
        self.population
    }

    pub fn balance(&self, id: AddressId) -> Quanta {
        Quanta(self.balance.get(id.0 as usize).copied().unwrap_or(0))
    }

    pub fn indegree(&self, id: AddressId) -> u64 {
        self.indegree.get(id.0 as usize).copied().unwrap_or(0)
    }

    pub fn total_issued(&self) -> Quanta {
        self.issued
    }

    pub fn total_fees(&self) -> Quanta {
        self.fees_total
    }

    /// α of the most recent year.
    pub fn fees_paid(&self) -> &BTreeMap<AddressId, Quanta> {
        &self.last_fees
    }

    /// β of the most recent year.
    pub fn coinbase_received(&self) -> &BTreeMap<AddressId, Quanta> {
        &self.last_coinbase
    }

    pub fn negative_balances(&self) -> usize {
        self.balance.iter().filter(|b| **b < 0).count()
    }

    fn values(&self, kind: RichKind) -> impl Iterator<Item = (AddressId, i128)> + '_ {
        self.present.iter().enumerate().filter(|(_, p)| **p).map(move |(i, _)| {
            let v = match kind {
                RichKind::Balance => self.balance[i],
                RichKind::Indegree => self.indegree[i] as i128,
            };
            (AddressId(i as u32), v)
        })
    }

    /// The `k` largest accounts, by value descending then address ascending.
    pub fn top_k(&self, kind: RichKind, k: usize) -> Result<RichSet, WealthError> {
        if self.population == 0 {
            return Err(WealthError::Empty);
        }
        let mut all: Vec<(AddressId, i128)> = self.values(kind).collect();
        let order = |a: &(AddressId, i128), b: &(AddressId, i128)| b.1.cmp(&a.1).then(a.0.cmp(&b.0));
        let k = k.min(all.len());
        if k > 0 && k < all.len() {
            all.select_nth_unstable_by(k - 1, order);
        }
        all.truncate(k);
        all.sort_unstable_by(order);
        Ok(RichSet {
            year: self.year.unwrap_or_default(),
            kind,
            members: all,
        })
    }

    /// `(mean of top-k) / (mean over the population)`.
    pub fn richness_ratio(&self, kind: RichKind, k: usize) -> Result<f64, WealthError> {
        let top = self.top_k(kind, k)?;
        let total: i128 = self.values(kind).map(|(_, v)| v).sum();
        if total <= 0 {
            return Err(WealthError::NonPositiveTotal);
        }
        let top_sum: i128 = top.members.iter().map(|(_, v)| v).sum();
        let num = top_sum * self.population as i128;
        let den = total * top.members.len() as i128;
        Ok(if num == den { 1.0 } else { num as f64 / den as f64 })
    }

    /// Writes `address_id, balance_quanta, indegree` for every account.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "address_id\tbalance_quanta\tindegree")?;
        for (i, present) in self.present.iter().enumerate() {
            if *present {
                writeln!(out, "{i}\t{}\t{}", self.balance[i], self.indegree[i])?;
            }
        }
        out.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RichSet {
    pub year: i32,
    pub kind: RichKind,
    /// `(address, value)`; balances in quanta, in-degrees as counts.
    pub members: Vec<(AddressId, i128)>,
}

/// `|⋃_{j≤t} S_j|` for each prefix of `sets`.
pub fn union_growth(sets: &[RichSet]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    sets.iter()
        .map(|s| {
            seen.extend(s.members.iter().map(|(a, _)| *a));
            seen.len()
        })
        .collect()
}

/// Display names for addresses, loaded from `address_id<TAB>name` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(HashMap<AddressId, String>);

impl LabelMap {
    pub fn parse<R: BufRead>(input: R) -> Result<Self, WealthError> {
        let mut map = HashMap::new();
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            let bad = |reason: &str| WealthError::Labels {
                line: lineno,
                reason: reason.to_string(),
            };
            let line = line.map_err(|e| bad(&e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (id, name) = trimmed
                .split_once('\t')
                .ok_or_else(|| bad("expected address_id<TAB>name"))?;
            let id: u32 = id.trim().parse().map_err(|_| bad("address id is not an integer"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(bad("empty label"));
            }
            if map.insert(AddressId(id), name.to_string()).is_some() {
                return Err(bad("duplicate address id"));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, id: AddressId) -> Option<&str> {
        self.0.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMember {
    pub rank: usize,
    pub address: AddressId,
    pub value: i128,
    pub label: Option<String>,
}

pub fn label_rich_set(set: &RichSet, labels: &LabelMap) -> Vec<LabeledMember> {
    set.members
        .iter()
        .enumerate()
        .map(|(i, &(address, value))| LabeledMember {
            rank: i + 1,
            address,
            value,
            label: labels.get(address).map(str::to_string),
        })
        .collect()
}
