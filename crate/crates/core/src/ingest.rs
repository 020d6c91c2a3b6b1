//! Raw record parsing, address interning and transaction assembly.
//!
//! Input is the seven-column edge-list layout
//! `block_number, transaction_id, is_coinbase, input_address_id,
//! output_address_id, value, timestamp`, comma- or tab-delimited.
//!
//! Rows of a non-coinbase transaction are gross input→output legs: the
//! amount an input contributes is the sum of its rows, the amount an output
//! receives is the sum of the rows naming it. A row whose output is
//! [`FEE_SINK_KEY`] carries (part of) the input's fee. Coinbase rows have an
//! empty input column and one row per rewarded output.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use thiserror::Error;

use crate::flow::TransactionGroup;
use crate::money::{parse_whole_amount, AmountError, Quanta};

/// Reserved output key marking a fee leg.
pub const FEE_SINK_KEY: &str = "__fee__";

/// Column names in file order.
pub const COLUMNS: [&str; 7] = [
    "block_number",
    "transaction_id",
    "is_coinbase",
    "input_address_id",
    "output_address_id",
    "value",
    "timestamp",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Tab,
}

impl Delimiter {
    pub fn as_char(self) -> char {
        match self {
            Delimiter::Comma => ',',
            Delimiter::Tab => '\t',
        }
    }

    /// Tab wins if the line contains one, comma otherwise.
    pub fn detect(header: &str) -> Delimiter {
        if header.contains('\t') {
            Delimiter::Tab
        } else {
            Delimiter::Comma
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub block_number: u64,
    pub transaction_id: String,
    pub is_coinbase: bool,
    pub input_address: Option<String>,
    pub output_address: String,
    /// Whole satoshis.
    pub value: u64,
    pub timestamp: DateTime<Utc>,
}

impl TransactionRecord {
    pub fn is_fee_leg(&self) -> bool {
        self.output_address == FEE_SINK_KEY
    }

    pub fn to_line(&self, delimiter: Delimiter) -> String {
        let d = delimiter.as_char();
        format!(
            "{}{d}{}{d}{}{d}{}{d}{}{d}{}{d}{}",
            self.block_number,
            self.transaction_id,
            u8::from(self.is_coinbase),
            self.input_address.as_deref().unwrap_or(""),
            self.output_address,
            self.value,
            format_timestamp(&self.timestamp),
        )
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    format!("{} UTC", ts.format(TIMESTAMP_FORMAT))
}

pub fn header_line(delimiter: Delimiter) -> String {
    COLUMNS.join(&delimiter.as_char().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordErrorKind {
    #[error("expected 7 fields, found {0}")]
    FieldCount(usize),
    #[error("invalid block_number {0:?}")]
    BlockNumber(String),
    #[error("empty transaction_id")]
    EmptyTransactionId,
    #[error("invalid is_coinbase flag {0:?}")]
    CoinbaseFlag(String),
    #[error("coinbase row carries input address {0:?}")]
    CoinbaseWithInput(String),
    #[error("non-coinbase row has no input address")]
    MissingInput,
    #[error("empty output address")]
    EmptyOutput,
    #[error("coinbase row cannot pay the fee sink")]
    CoinbaseFee,
    #[error("invalid value: {0}")]
    Value(#[from] AmountError),
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
}

/// A rejected row, with its 1-based line number when known.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct RecordError {
    pub row: Option<usize>,
    pub text: String,
    pub kind: RecordErrorKind,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "row {row}: {} in {:?}", self.kind, self.text),
            None => write!(f, "{} in {:?}", self.kind, self.text),
        }
    }
}

fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let t = text.trim();
    let t = t.strip_suffix("UTC").map(str::trim_end).unwrap_or(t);
    NaiveDateTime::parse_from_str(t, TIMESTAMP_FORMAT)
        .ok()
        .map(|naive| naive.and_utc())
}

/// Parses one data row, detecting the delimiter from the row itself.
pub fn parse_record(line: &str) -> Result<TransactionRecord, RecordError> {
    parse_record_with(line, Delimiter::detect(line), None)
}

pub fn parse_record_with(
    line: &str,
    delimiter: Delimiter,
    row: Option<usize>,
) -> Result<TransactionRecord, RecordError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fail = |kind| RecordError {
        row,
        text: line.to_string(),
        kind,
    };
    let fields: Vec<&str> = line.split(delimiter.as_char()).collect();
    if fields.len() != COLUMNS.len() {
        return Err(fail(RecordErrorKind::FieldCount(fields.len())));
    }
    let block_number = fields[0]
        .trim()
        .parse::<u64>()
        .map_err(|_| fail(RecordErrorKind::BlockNumber(fields[0].to_string())))?;
    let transaction_id = fields[1].trim();
    if transaction_id.is_empty() {
        return Err(fail(RecordErrorKind::EmptyTransactionId));
    }
    let is_coinbase = match fields[2].trim() {
        "1" | "true" | "True" | "TRUE" => true,
        "0" | "false" | "False" | "FALSE" => false,
        other => return Err(fail(RecordErrorKind::CoinbaseFlag(other.to_string()))),
    };
    let input = fields[3].trim();
    let input_address = match (is_coinbase, input.is_empty()) {
        (true, false) => return Err(fail(RecordErrorKind::CoinbaseWithInput(input.to_string()))),
        (false, true) => return Err(fail(RecordErrorKind::MissingInput)),
        (true, true) => None,
        (false, false) => Some(input.to_string()),
    };
    let output_address = fields[4].trim();
    if output_address.is_empty() {
        return Err(fail(RecordErrorKind::EmptyOutput));
    }
    if is_coinbase && output_address == FEE_SINK_KEY {
        return Err(fail(RecordErrorKind::CoinbaseFee));
    }
    let value = parse_whole_amount(fields[5]).map_err(|e| fail(RecordErrorKind::Value(e)))?;
    let timestamp =
        parse_timestamp(fields[6]).ok_or_else(|| fail(RecordErrorKind::Timestamp(fields[6].to_string())))?;
    Ok(TransactionRecord {
        block_number,
        transaction_id: transaction_id.to_string(),
        is_coinbase,
        input_address,
        output_address: output_address.to_string(),
        value,
        timestamp,
    })
}

/// Dense integer identifier of an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddressId(pub u32);

impl fmt::Display for AddressId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("empty address key")]
    EmptyKey,
    #[error("address key {0:?} contains a tab or newline")]
    InvalidKey(String),
    #[error("address space exhausted")]
    Full,
    #[error("dictionary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Bijection between address keys and dense IDs, assigned in first-seen
/// order. Persists as append-only `id<TAB>key` lines.
#[derive(Debug, Default, Clone)]
pub struct AddressDictionary {
    ids: HashMap<Box<str>, AddressId>,
    keys: Vec<Box<str>>,
    persisted: usize,
}

impl AddressDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, key: &str) -> Result<AddressId, DictionaryError> {
        if let Some(&id) = self.ids.get(key) {
            return Ok(id);
        }
        if key.is_empty() {
            return Err(DictionaryError::EmptyKey);
        }
        if key.contains(['\t', '\n', '\r']) {
            return Err(DictionaryError::InvalidKey(key.to_string()));
        }
        let id = AddressId(u32::try_from(self.keys.len()).map_err(|_| DictionaryError::Full)?);
        let boxed: Box<str> = key.into();
        self.ids.insert(boxed.clone(), id);
        self.keys.push(boxed);
        Ok(id)
    }

    pub fn get(&self, key: &str) -> Option<AddressId> {
        self.ids.get(key).copied()
    }

    pub fn key(&self, id: AddressId) -> Option<&str> {
        self.keys.get(id.0 as usize).map(|k| &**k)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.keys.len() as u32
    }

    /// Loads a dictionary file. A missing file yields an empty dictionary.
    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(e.into()),
        };
        let mut dict = Self::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let malformed = |reason: &str| DictionaryError::Malformed {
                line: lineno,
                reason: reason.to_string(),
            };
            let (id, key) = line.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
            let id: u32 = id.parse().map_err(|_| malformed("non-integer id"))?;
            if id != dict.next_id() {
                return Err(malformed("ids must be dense and in order"));
            }
            if dict.ids.contains_key(key) {
                return Err(malformed("duplicate key"));
            }
            dict.intern(key)?;
        }
        dict.persisted = dict.keys.len();
        Ok(dict)
    }

    /// Appends entries assigned since the last load/persist.
    pub fn persist(&mut self, path: &Path) -> Result<(), DictionaryError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut out = BufWriter::new(file);
        for (i, key) in self.keys.iter().enumerate().skip(self.persisted) {
            writeln!(out, "{i}\t{key}")?;
        }
        out.flush()?;
        self.persisted = self.keys.len();
        Ok(())
    }
}

/// Opens a file (or `-` for stdin), transparently decompressing gzip.
pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let raw: Box<dyn Read + Send> = if path.as_os_str() == "-" {
        Box::new(io::stdin())
    } else {
        Box::new(File::open(path)?)
    };
    let mut reader = BufReader::with_capacity(1 << 16, raw);
    let is_gzip = reader.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if is_gzip {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("input is empty (no header)")]
    MissingHeader,
    #[error("header {found:?} does not match the expected columns {expected:?}")]
    BadHeader { found: String, expected: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streams validated records in batches; each batch is parsed in parallel
/// and errors are reported for the earliest offending row.
pub struct RecordReader<R> {
    inner: R,
    delimiter: Delimiter,
    row: usize,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(mut inner: R) -> Result<Self, ReadError> {
        let mut header = String::new();
        if inner.read_line(&mut header)? == 0 {
            return Err(ReadError::MissingHeader);
        }
        let header = header.trim_end_matches(['\r', '\n']);
        let delimiter = Delimiter::detect(header);
        let names: Vec<&str> = header.split(delimiter.as_char()).map(str::trim).collect();
        let matches = names.len() == COLUMNS.len()
            && names
                .iter()
                .zip(COLUMNS)
                .all(|(found, want)| *found == want || want.strip_suffix("_id").is_some_and(|w| *found == w));
        if !matches {
            return Err(ReadError::BadHeader {
                found: header.to_string(),
                expected: COLUMNS.join(","),
            });
        }
        Ok(Self {
            inner,
            delimiter,
            row: 1,
            done: false,
        })
    }

    pub fn delimiter(&self) -> Delimiter {
        self.delimiter
    }

    /// Returns up to `max` records; an empty vector means end of input.
    pub fn next_batch(&mut self, max: usize) -> Result<Vec<TransactionRecord>, ReadError> {
        let mut lines = Vec::with_capacity(max.min(1 << 16));
        while !self.done && lines.len() < max {
            let mut line = String::new();
            if self.inner.read_line(&mut line)? == 0 {
                self.done = true;
                break;
            }
            self.row += 1;
            if line.trim().is_empty() {
                continue;
            }
            lines.push((self.row, line));
        }
        let delimiter = self.delimiter;
        let parsed: Vec<Result<TransactionRecord, RecordError>> = lines
            .par_iter()
            .map(|(row, line)| parse_record_with(line, delimiter, Some(*row)))
            .collect();
        parsed
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(ReadError::Record)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("block {0} reappears after other blocks; input must be block-contiguous")]
    BlockNotContiguous(u64),
    #[error("transaction {tx} in block {block} mixes coinbase and regular rows")]
    MixedCoinbase { block: u64, tx: String },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
}

#[derive(Default)]
struct PendingTx {
    coinbase: Option<bool>,
    mixed: bool,
    timestamp: Option<DateTime<Utc>>,
    inputs: BTreeMap<AddressId, u128>,
    outputs: BTreeMap<AddressId, u128>,
}

/// Buckets records by transaction within each block and emits assembled
/// [`TransactionGroup`]s once a block is complete. Addresses are interned
/// as records arrive, so IDs follow input order.
pub struct TransactionAssembler<'d> {
    dict: &'d mut AddressDictionary,
    current_block: Option<u64>,
    pending: BTreeMap<String, PendingTx>,
    finished_blocks: HashSet<u64>,
}

impl<'d> TransactionAssembler<'d> {
    pub fn new(dict: &'d mut AddressDictionary) -> Self {
        Self {
            dict,
            current_block: None,
            pending: BTreeMap::new(),
            finished_blocks: HashSet::new(),
        }
    }

    pub fn dictionary(&self) -> &AddressDictionary {
        self.dict
    }

    /// Adds a record; completed transactions of the previous block are
    /// appended to `out`.
    pub fn push(&mut self, rec: &TransactionRecord, out: &mut Vec<TransactionGroup>) -> Result<(), IngestError> {
        if self.current_block != Some(rec.block_number) {
            if self.finished_blocks.contains(&rec.block_number) {
                return Err(AssemblyError::BlockNotContiguous(rec.block_number).into());
            }
            self.flush(out)?;
            self.current_block = Some(rec.block_number);
        }
        let input = match &rec.input_address {
            Some(key) => Some(self.dict.intern(key)?),
            None => None,
        };
        let output = if rec.is_fee_leg() {
            None
        } else {
            Some(self.dict.intern(&rec.output_address)?)
        };
        let tx = self.pending.entry(rec.transaction_id.clone()).or_default();
        match tx.coinbase {
            None => tx.coinbase = Some(rec.is_coinbase),
            Some(c) if c != rec.is_coinbase => tx.mixed = true,
            Some(_) => {}
        }
        tx.timestamp = Some(match tx.timestamp {
            Some(t) => t.min(rec.timestamp),
            None => rec.timestamp,
        });
        let value = rec.value as u128;
        if let Some(i) = input {
            *tx.inputs.entry(i).or_default() += value;
        }
        if let Some(o) = output {
            *tx.outputs.entry(o).or_default() += value;
        }
        Ok(())
    }

    /// Emits every pending transaction of the current block.
    pub fn flush(&mut self, out: &mut Vec<TransactionGroup>) -> Result<(), IngestError> {
        let Some(block) = self.current_block.take() else {
            return Ok(());
        };
        self.finished_blocks.insert(block);
        for (tx_id, tx) in std::mem::take(&mut self.pending) {
            if tx.mixed {
                return Err(AssemblyError::MixedCoinbase { block, tx: tx_id }.into());
            }
            let to_quanta = |m: BTreeMap<AddressId, u128>| -> Vec<(AddressId, Quanta)> {
                m.into_iter()
                    .map(|(a, sat)| (a, Quanta(sat as i128 * crate::money::QUANTA_PER_SATOSHI)))
                    .collect()
            };
            out.push(TransactionGroup {
                block_number: block,
                tx_id,
                timestamp: tx.timestamp.expect("pending tx has at least one row"),
                coinbase: tx.coinbase.unwrap_or(false),
                inputs: to_quanta(tx.inputs),
                outputs: to_quanta(tx.outputs),
            });
        }
        Ok(())
    }
}
