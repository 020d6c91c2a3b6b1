//! Deterministic synthetic chain generator.
//!
//! Produces the ingest row format block by block. Every block starts with
//! a coinbase paying the current subsidy to one receiver, followed by the
//! block's share of the year's transactions. A transaction drains the full
//! balance of one or more funded addresses (chosen uniformly), pays a fee,
//! and sends the rest to receivers, optionally returning change to the
//! first spender. Receivers are a fresh address with probability
//! `new_address_rate`, otherwise an existing address chosen uniformly or in
//! proportion to `1 + received payments` (preferential mode).
//!
//! All randomness comes from [`PortableRng`], so a seed fixes the byte
//! stream.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

use crate::ingest::{TransactionRecord, FEE_SINK_KEY};
use crate::rng::PortableRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    Uniform,
    Preferential,
}

impl fmt::Display for Attachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attachment::Uniform => "uniform",
            Attachment::Preferential => "preferential",
        })
    }
}

impl FromStr for Attachment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Attachment::Uniform),
            "preferential" => Ok(Attachment::Preferential),
            other => Err(format!("unknown attachment mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start_year: i32,
    pub years: u32,
    pub tx_per_year: u64,
    pub blocks_per_year: u32,
    /// Probability that a receiver is a brand-new address.
    pub new_address_rate: f64,
    pub attachment: Attachment,
    /// Fraction of transactions that only move a dust amount (≤ 10⁴ sat).
    pub dust_fraction: f64,
    /// Fee as a fraction of the transaction input.
    pub fee_rate: f64,
    /// Probability that a transaction returns change to its first spender.
    pub change_rate: f64,
    pub max_inputs: u32,
    pub max_outputs: u32,
    /// Initial coinbase subsidy in satoshi.
    pub block_reward: u64,
    /// Blocks between subsidy halvings.
    pub halving_interval: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            start_year: 2009,
            years: 15,
            tx_per_year: 100_000,
            blocks_per_year: 365,
            new_address_rate: 0.3,
            attachment: Attachment::Preferential,
            dust_fraction: 0.05,
            fee_rate: 0.001,
            change_rate: 0.5,
            max_inputs: 3,
            max_outputs: 3,
            block_reward: 5_000_000_000,
            halving_interval: 365 * 4,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Invalid(String),
    #[error("infeasible: block {block} has no funded address to spend from")]
    Infeasible { block: u64 },
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.years == 0 {
            return bad("years must be positive");
        }
        if self.blocks_per_year == 0 {
            return bad("blocks_per_year must be positive");
        }
        if self.max_inputs == 0 || self.max_outputs == 0 {
            return bad("max_inputs and max_outputs must be positive");
        }
        if self.halving_interval == 0 {
            return bad("halving_interval must be positive");
        }
        if !(0.0..1.0).contains(&self.dust_fraction) {
            return bad("dust_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.fee_rate) {
            return bad("fee_rate must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.new_address_rate) || !(0.0..=1.0).contains(&self.change_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.block_reward == 0 && self.tx_per_year > 0 {
            return Err(SynthError::Infeasible { block: 1 });
        }
        if Utc.with_ymd_and_hms(self.start_year, 1, 1, 0, 0, 0).single().is_none()
            || self.start_year.checked_add(self.years as i32).is_none()
        {
            return bad("year range out of bounds");
        }
        Ok(())
    }
}

const DUST_MAX_SAT: u64 = 10_000;

/// Streams the synthetic chain as [`TransactionRecord`]s.
pub struct ChainGenerator {
    cfg: SynthConfig,
    fee_ppm: u64,
    rng: PortableRng,
    balances: Vec<u64>,
    funded: Vec<u32>,
    funded_pos: Vec<u32>,
    /// Each address once, plus once per payment received.
    attachment_pool: Vec<u32>,
    year_idx: u32,
    block_in_year: u32,
    block_number: u64,
    tx_counter: u64,
    pending: VecDeque<TransactionRecord>,
    failed: bool,
}

const NOT_FUNDED: u32 = u32::MAX;

pub fn generate_chain(cfg: &SynthConfig) -> Result<ChainGenerator, SynthError> {
    cfg.validate()?;
    Ok(ChainGenerator {
        fee_ppm: (cfg.fee_rate * 1e6).round() as u64,
        rng: PortableRng::new(cfg.seed),
        cfg: cfg.clone(),
        balances: Vec::new(),
        funded: Vec::new(),
        funded_pos: Vec::new(),
        attachment_pool: Vec::new(),
        year_idx: 0,
        block_in_year: 0,
        block_number: 0,
        tx_counter: 0,
        pending: VecDeque::new(),
        failed: false,
    })
}

impl ChainGenerator {
    fn new_address(&mut self) -> u32 {
        let id = self.balances.len() as u32;
        self.balances.push(0);
        self.funded_pos.push(NOT_FUNDED);
        self.attachment_pool.push(id);
        id
    }

    fn pick_receiver(&mut self) -> u32 {
        if self.balances.is_empty() || self.rng.chance(self.cfg.new_address_rate) {
            return self.new_address();
        }
        match self.cfg.attachment {
            Attachment::Uniform => self.rng.below(self.balances.len() as u64) as u32,
            Attachment::Preferential => {
                let i = self.rng.below(self.attachment_pool.len() as u64) as usize;
                self.attachment_pool[i]
            }
        }
    }

    fn credit(&mut self, addr: u32, amount: u64, payment: bool) {
        let a = addr as usize;
        self.balances[a] += amount;
        if self.balances[a] > 0 && self.funded_pos[a] == NOT_FUNDED {
            self.funded_pos[a] = self.funded.len() as u32;
            self.funded.push(addr);
        }
        if payment && self.cfg.attachment == Attachment::Preferential {
            self.attachment_pool.push(addr);
        }
    }

    fn drain(&mut self, addr: u32) -> u64 {
        let a = addr as usize;
        let amount = std::mem::take(&mut self.balances[a]);
        let pos = self.funded_pos[a];
        if pos != NOT_FUNDED {
            let last = *self.funded.last().expect("non-empty");
            self.funded.swap_remove(pos as usize);
            if last != addr {
                self.funded_pos[last as usize] = pos;
            }
            self.funded_pos[a] = NOT_FUNDED;
        }
        amount
    }

    fn timestamp(&self) -> DateTime<Utc> {
        let year = self.cfg.start_year + self.year_idx as i32;
        let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(year + 1, 1, 1, 0, 0, 0).unwrap();
        let span = (end - start).num_seconds();
        start + chrono::Duration::seconds(span * self.block_in_year as i64 / self.cfg.blocks_per_year as i64)
    }

    fn next_tx_id(&mut self) -> String {
        self.tx_counter += 1;
        self.tx_counter.to_string()
    }

    fn subsidy(&self) -> u64 {
        let halvings = (self.block_number - 1) / self.cfg.halving_interval;
        if halvings >= 64 {
            0
        } else {
            self.cfg.block_reward >> halvings
        }
    }

    fn record(&self, tx: &str, ts: DateTime<Utc>, input: Option<u32>, output: String, value: u64) -> TransactionRecord {
        TransactionRecord {
            block_number: self.block_number,
            transaction_id: tx.to_string(),
            is_coinbase: input.is_none(),
            input_address: input.map(|i| i.to_string()),
            output_address: output,
            value,
            timestamp: ts,
        }
    }

    fn generate_block(&mut self) -> Result<(), SynthError> {
        self.block_number += 1;
        let ts = self.timestamp();

        let miner = self.pick_receiver();
        let reward = self.subsidy();
        let cb = self.next_tx_id();
        if reward > 0 {
            self.credit(miner, reward, true);
            self.pending
                .push_back(self.record(&cb, ts, None, miner.to_string(), reward));
        }

        let per_year = self.cfg.tx_per_year;
        let blocks = self.cfg.blocks_per_year as u64;
        let b = self.block_in_year as u64;
        let count = (b + 1) * per_year / blocks - b * per_year / blocks;
        for _ in 0..count {
            self.generate_tx(ts)?;
        }
        Ok(())
    }

    fn generate_tx(&mut self, ts: DateTime<Utc>) -> Result<(), SynthError> {
        if self.funded.is_empty() {
            return Err(SynthError::Infeasible {
                block: self.block_number,
            });
        }
        let want_inputs = self.rng.between(1, self.cfg.max_inputs as u64) as usize;
        let mut spenders: Vec<u32> = Vec::with_capacity(want_inputs);
        for _ in 0..want_inputs.min(self.funded.len()) {
            let s = self.funded[self.rng.below(self.funded.len() as u64) as usize];
            if !spenders.contains(&s) {
                spenders.push(s);
            }
        }
        let inputs: Vec<(u32, u64)> = spenders.iter().map(|&s| (s, self.drain(s))).collect();
        let t_in: u64 = inputs.iter().map(|(_, v)| v).sum();
        let mut fee = (t_in as u128 * self.fee_ppm as u128 / 1_000_000) as u64;
        if fee >= t_in {
            fee = 0;
        }
        let t_out = t_in - fee;

        let mut outputs: Vec<(u32, u64, bool)> = Vec::new();
        let change_to = spenders[0];
        if self.rng.chance(self.cfg.dust_fraction) {
            let dust = self.rng.between(1, DUST_MAX_SAT).min(t_out);
            let receiver = self.pick_receiver();
            outputs.push((receiver, dust, true));
            if t_out > dust {
                outputs.push((change_to, t_out - dust, false));
            }
        } else {
            let pay = if self.rng.chance(self.cfg.change_rate) {
                // Between 5% and 100% of the available amount.
                let share_ppm = self.rng.between(50_000, 1_000_000);
                ((t_out as u128 * share_ppm as u128 / 1_000_000) as u64).max(1)
            } else {
                t_out
            };
            let n_out = (self.rng.between(1, self.cfg.max_outputs as u64)).min(pay) as usize;
            let weights: Vec<u64> = (0..n_out).map(|_| self.rng.between(1, 1000)).collect();
            let wsum: u64 = weights.iter().sum();
            let mut left = pay;
            for (k, w) in weights.iter().enumerate() {
                let amount = if k + 1 == n_out {
                    left
                } else {
                    // Leave at least one satoshi per remaining output.
                    let share = (pay as u128 * *w as u128 / wsum as u128) as u64;
                    share.clamp(1, left - (n_out - k - 1) as u64)
                };
                left -= amount;
                let receiver = self.pick_receiver();
                outputs.push((receiver, amount, true));
            }
            if t_out > pay {
                outputs.push((change_to, t_out - pay, false));
            }
        }

        // Gross legs by the northwest-corner rule: inputs are matched
        // against outputs then the fee, in order.
        let tx = self.next_tx_id();
        let mut columns: Vec<(String, u64)> = outputs.iter().map(|(a, v, _)| (a.to_string(), *v)).collect();
        if fee > 0 {
            columns.push((FEE_SINK_KEY.to_string(), fee));
        }
        let mut col = 0;
        let mut col_left = columns.first().map_or(0, |c| c.1);
        for &(src, mut amount) in &inputs {
            while amount > 0 && col < columns.len() {
                let take = amount.min(col_left);
                if take > 0 {
                    let rec = self.record(&tx, ts, Some(src), columns[col].0.clone(), take);
                    self.pending.push_back(rec);
                }
                amount -= take;
                col_left -= take;
                if col_left == 0 {
                    col += 1;
                    col_left = columns.get(col).map_or(0, |c| c.1);
                }
            }
        }
        for (addr, amount, payment) in outputs {
            self.credit(addr, amount, payment);
        }
        Ok(())
    }
}

impl Iterator for ChainGenerator {
    type Item = Result<TransactionRecord, SynthError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                return Some(Ok(r));
            }
            if self.failed || self.year_idx >= self.cfg.years {
                return None;
            }
            if let Err(e) = self.generate_block() {
                self.failed = true;
                return Some(Err(e));
            }
            self.block_in_year += 1;
            if self.block_in_year == self.cfg.blocks_per_year {
                self.block_in_year = 0;
                self.year_idx += 1;
            }
        }
    }
}
