//! Fee-adjusted address-to-address value attribution.
//!
//! For a transaction with inputs `v_in(i)`, outputs `v_out(j)`, totals
//! `t_in`, `t_out` and fee `t_fee = t_in − t_out`, the value flowing from
//! input `i` to output `j` is
//!
//! ```text
//! v(i→j) = (v_in(i) − t_fee·v_in(i)/t_in) · v_out(j)/t_out
//! ```
//!
//! Everything is integer quanta. Rounding happens in two largest-remainder
//! passes: `t_out` is first split across inputs in proportion to `v_in`
//! (which fixes each input's fee share exactly), then each input's net
//! amount is split across outputs in proportion to `v_out`. Both passes
//! break remainder ties by the lower address ID, so the result is exact
//! (`Σ v(i→j) = t_out`) and deterministic.

use chrono::{DateTime, Utc};
use log::warn;
use thiserror::Error;

use crate::ingest::AddressId;
use crate::money::{mul_div_rem, Quanta};

/// One transaction with its inputs and outputs merged per address and
/// sorted by address ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionGroup {
    pub block_number: u64,
    pub tx_id: String,
    pub timestamp: DateTime<Utc>,
    pub coinbase: bool,
    pub inputs: Vec<(AddressId, Quanta)>,
    pub outputs: Vec<(AddressId, Quanta)>,
}

impl TransactionGroup {
    pub fn t_in(&self) -> Quanta {
        self.inputs.iter().map(|(_, v)| *v).sum()
    }

    pub fn t_out(&self) -> Quanta {
        self.outputs.iter().map(|(_, v)| *v).sum()
    }

    pub fn t_fee(&self) -> Quanta {
        if self.coinbase {
            Quanta::ZERO
        } else {
            self.t_in() - self.t_out()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowEdge {
    pub src: AddressId,
    pub dst: AddressId,
    pub value: Quanta,
    pub timestamp: DateTime<Utc>,
}

impl FlowEdge {
    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinbaseCredit {
    pub dst: AddressId,
    pub value: Quanta,
    pub timestamp: DateTime<Utc>,
}

/// The part of a transaction fee borne by one spending address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeeShare {
    pub src: AddressId,
    pub value: Quanta,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("transaction {0} is a coinbase; it has no inputs to attribute")]
    Coinbase(String),
    #[error("transaction {0} is not a coinbase")]
    NotCoinbase(String),
    #[error("transaction {tx} spends {t_out:?} but only has {t_in:?} of inputs")]
    Overspend { tx: String, t_in: Quanta, t_out: Quanta },
    #[error("transaction {0} has a negative amount")]
    NegativeAmount(String),
}

/// Splits `total` across `weights` in proportion, assigning leftover units
/// to the largest remainders (ties: lower key). `Σ result = total` when
/// `Σ weights > 0`.
fn apportion(total: u128, weights: &[(AddressId, u128)]) -> Vec<u128> {
    let weight_sum: u128 = weights.iter().map(|(_, w)| *w).sum();
    if weight_sum == 0 {
        return vec![0; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0u128;
    for (idx, (key, w)) in weights.iter().enumerate() {
        let (q, r) = mul_div_rem(total, *w, weight_sum);
        shares.push(q);
        assigned += q;
        remainders.push((r, *key, idx));
    }
    let leftover = (total - assigned) as usize;
    if leftover > 0 {
        remainders.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, _, idx) in remainders.iter().take(leftover) {
            shares[idx] += 1;
        }
    }
    shares
}

struct InputSplit {
    /// Per input: (address, gross amount, net amount after fee share).
    rows: Vec<(AddressId, u128, u128)>,
    outputs: Vec<(AddressId, u128)>,
}

fn split_inputs(tx: &TransactionGroup) -> Result<Option<InputSplit>, FlowError> {
    if tx.coinbase {
        return Err(FlowError::Coinbase(tx.tx_id.clone()));
    }
    let to_u128 = |v: Quanta| u128::try_from(v.0).map_err(|_| FlowError::NegativeAmount(tx.tx_id.clone()));
    let mut inputs = Vec::with_capacity(tx.inputs.len());
    for (a, v) in &tx.inputs {
        let v = to_u128(*v)?;
        if v > 0 {
            inputs.push((*a, v));
        }
    }
    let mut outputs = Vec::with_capacity(tx.outputs.len());
    for (a, v) in &tx.outputs {
        let v = to_u128(*v)?;
        if v > 0 {
            outputs.push((*a, v));
        }
    }
    let t_in: u128 = inputs.iter().map(|(_, v)| *v).sum();
    let t_out: u128 = outputs.iter().map(|(_, v)| *v).sum();
    if t_out > t_in {
        return Err(FlowError::Overspend {
            tx: tx.tx_id.clone(),
            t_in: Quanta(t_in as i128),
            t_out: Quanta(t_out as i128),
        });
    }
    if t_out == 0 {
        return Ok(None);
    }
    let nets = apportion(t_out, &inputs);
    let rows = inputs
        .iter()
        .zip(nets)
        .map(|(&(a, gross), net)| (a, gross, net))
        .collect();
    Ok(Some(InputSplit { rows, outputs }))
}

/// Attributes a regular transaction's outputs to its inputs.
///
/// Transactions whose outputs are all zero produce no flows and are logged.
pub fn attribute_flows(tx: &TransactionGroup) -> Result<Vec<FlowEdge>, FlowError> {
    let Some(split) = split_inputs(tx)? else {
        warn!(
            "transaction {} in block {} has no positive outputs; no flows emitted",
            tx.tx_id, tx.block_number
        );
        return Ok(Vec::new());
    };
    let mut flows = Vec::with_capacity(split.rows.len() * split.outputs.len());
    for &(src, _, net) in &split.rows {
        let per_output = apportion(net, &split.outputs);
        for (&(dst, _), value) in split.outputs.iter().zip(per_output) {
            if value > 0 {
                flows.push(FlowEdge {
                    src,
                    dst,
                    value: Quanta(value as i128),
                    timestamp: tx.timestamp,
                });
            }
        }
    }
    Ok(flows)
}

/// Fee shares per spending address; they sum to `t_fee` exactly.
///
/// When every output is zero the whole input is treated as fee.
pub fn fee_shares(tx: &TransactionGroup) -> Result<Vec<FeeShare>, FlowError> {
    let shares: Vec<(AddressId, u128)> = match split_inputs(tx)? {
        Some(split) => split.rows.iter().map(|&(a, gross, net)| (a, gross - net)).collect(),
        None => tx.inputs.iter().map(|(a, v)| (*a, v.0.max(0) as u128)).collect(),
    };
    Ok(shares
        .into_iter()
        .filter(|(_, v)| *v > 0)
        .map(|(src, v)| FeeShare {
            src,
            value: Quanta(v as i128),
            timestamp: tx.timestamp,
        })
        .collect())
}

/// One credit per positive coinbase output.
pub fn coinbase_credits(tx: &TransactionGroup) -> Result<Vec<CoinbaseCredit>, FlowError> {
    if !tx.coinbase {
        return Err(FlowError::NotCoinbase(tx.tx_id.clone()));
    }
    Ok(tx
        .outputs
        .iter()
        .filter(|(_, v)| v.is_positive())
        .map(|&(dst, value)| CoinbaseCredit {
            dst,
            value,
            timestamp: tx.timestamp,
        })
        .collect())
}

/// Everything a transaction contributes downstream.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Decomposed {
    pub flows: Vec<FlowEdge>,
    pub fees: Vec<FeeShare>,
    pub credits: Vec<CoinbaseCredit>,
}

pub fn decompose(tx: &TransactionGroup) -> Result<Decomposed, FlowError> {
    if tx.coinbase {
        Ok(Decomposed {
            credits: coinbase_credits(tx)?,
            ..Default::default()
        })
    } else {
        Ok(Decomposed {
            flows: attribute_flows(tx)?,
            fees: fee_shares(tx)?,
            credits: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn sat(s: i128) -> Quanta {
        Quanta(s * 10_000)
    }

    fn tx(inputs: &[(u32, i128)], outputs: &[(u32, i128)]) -> TransactionGroup {
        TransactionGroup {
            block_number: 1,
            tx_id: "t".into(),
            timestamp: Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(),
            coinbase: false,
            inputs: inputs.iter().map(|&(a, v)| (AddressId(a), sat(v))).collect(),
            outputs: outputs.iter().map(|&(a, v)| (AddressId(a), sat(v))).collect(),
        }
    }

    fn as_triples(flows: &[FlowEdge]) -> Vec<(u32, u32, i128)> {
        flows.iter().map(|f| (f.src.0, f.dst.0, f.value.0)).collect()
    }

    #[test]
    fn two_by_two_example() {
        // A=0, B=1, C=2, D=3
        let t = tx(&[(0, 100), (1, 300)], &[(2, 90), (3, 270)]);
        assert_eq!(t.t_fee(), sat(40));
        let flows = attribute_flows(&t).unwrap();
        assert_eq!(
            as_triples(&flows),
            vec![(0, 2, 225_000), (0, 3, 675_000), (1, 2, 675_000), (1, 3, 2_025_000)]
        );
        let fees = fee_shares(&t).unwrap();
        assert_eq!(fees.iter().map(|f| f.value).collect::<Vec<_>>(), vec![sat(10), sat(30)]);
    }

    #[test]
    fn identity_case() {
        let flows = attribute_flows(&tx(&[(0, 50)], &[(1, 50)])).unwrap();
        assert_eq!(as_triples(&flows), vec![(0, 1, 500_000)]);
    }

    #[test]
    fn conservation_with_fee() {
        let flows = attribute_flows(&tx(&[(0, 7)], &[(1, 3), (2, 3)])).unwrap();
        let total: i128 = flows.iter().map(|f| f.value.0).sum();
        assert_eq!(total, sat(6).0);
    }

    #[test]
    fn remainder_ties_go_to_lower_output_id() {
        // 1 quantum net over two equal outputs: the lower ID gets it.
        let t = TransactionGroup {
            inputs: vec![(AddressId(0), Quanta(1))],
            outputs: vec![(AddressId(5), Quanta(1)), (AddressId(9), Quanta(1))],
            ..tx(&[], &[])
        };
        // t_out (2) > t_in (1) is an overspend.
        assert!(matches!(attribute_flows(&t), Err(FlowError::Overspend { .. })));
        let t = TransactionGroup {
            inputs: vec![(AddressId(0), Quanta(3))],
            outputs: vec![
                (AddressId(5), Quanta(1)),
                (AddressId(9), Quanta(1)),
                (AddressId(7), Quanta(1)),
            ],
            ..tx(&[], &[])
        };
        let flows = attribute_flows(&t).unwrap();
        assert_eq!(flows.len(), 3);
        let odd = TransactionGroup {
            inputs: vec![(AddressId(0), Quanta(1)), (AddressId(1), Quanta(1))],
            outputs: vec![(AddressId(5), Quanta(1))],
            ..tx(&[], &[])
        };
        // One quantum out, two equal inputs: lower input ID sends it.
        assert_eq!(as_triples(&attribute_flows(&odd).unwrap()), vec![(0, 5, 1)]);
        let fees = fee_shares(&odd).unwrap();
        assert_eq!(fees.len(), 1);
        assert_eq!(fees[0].src, AddressId(1));
    }

    #[test]
    fn zero_outputs_emit_nothing() {
        let t = tx(&[(0, 10)], &[(1, 0)]);
        assert!(attribute_flows(&t).unwrap().is_empty());
        assert_eq!(fee_shares(&t).unwrap()[0].value, sat(10));
    }

    #[test]
    fn zero_value_output_is_ignored() {
        let flows = attribute_flows(&tx(&[(0, 10)], &[(1, 10), (2, 0)])).unwrap();
        assert_eq!(as_triples(&flows), vec![(0, 1, 100_000)]);
    }

    #[test]
    fn coinbase_contracts() {
        let mut cb = tx(&[], &[(4, 50 * 100_000_000), (5, 0), (6, 25)]);
        cb.coinbase = true;
        assert!(matches!(attribute_flows(&cb), Err(FlowError::Coinbase(_))));
        let credits = coinbase_credits(&cb).unwrap();
        assert_eq!(credits.len(), 2);
        assert_eq!(credits.iter().map(|c| c.value).sum::<Quanta>(), cb.t_out());
        assert!(matches!(
            coinbase_credits(&tx(&[(0, 1)], &[(1, 1)])),
            Err(FlowError::NotCoinbase(_))
        ));
    }
}
