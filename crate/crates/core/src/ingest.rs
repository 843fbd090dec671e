//! Loading and aligning raw inputs.
//!
//! Option quotes arrive as one CSV per market with header
//! `date,time,expiry,right,strike,bid,ask`; rate files use
//! `date,tenor_years,rate_pct` and scalar macro series use `date,value`.
//! Bad rows are skipped and counted; structural problems (missing file,
//! wrong header) are fatal.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::{Benchmark, Market};

pub const QUOTE_HEADER: [&str; 7] = ["date", "time", "expiry", "right", "strike", "bid", "ask"];
pub const VALUE_HEADER: [&str; 2] = ["date", "value"];
pub const TENOR_HEADER: [&str; 3] = ["date", "tenor_years", "rate_pct"];

/// Calendar days per year used for every year fraction in the pipeline.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("quotes span more than one (market, date) partition")]
    MixedPartition,
    #[error("required series `{0}` is missing or empty")]
    MissingSeries(&'static str),
    #[error("invalid snapshot time `{0}` (expected HH:MM)")]
    SnapshotTime(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Right {
    Call,
    Put,
}

impl Right {
    fn code(self) -> &'static str {
        match self {
            Right::Call => "C",
            Right::Put => "P",
        }
    }
}

/// Minute of the trading day, e.g. 15:45 is 945.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnapshotTime(u16);

impl SnapshotTime {
    pub fn new(hour: u16, minute: u16) -> Option<Self> {
        (hour < 24 && minute < 60).then_some(Self(hour * 60 + minute))
    }

    pub fn minute_of_day(self) -> u16 {
        self.0
    }
}

impl Default for SnapshotTime {
    fn default() -> Self {
        Self(15 * 60 + 45)
    }
}

impl fmt::Display for SnapshotTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for SnapshotTime {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || IngestError::SnapshotTime(s.to_string());
        let (h, m) = s.trim().split_once(':').ok_or_else(err)?;
        if h.len() != 2 || m.len() != 2 {
            return Err(err());
        }
        let h: u16 = h.parse().map_err(|_| err())?;
        let m: u16 = m.parse().map_err(|_| err())?;
        Self::new(h, m).ok_or_else(err)
    }
}

impl Serialize for SnapshotTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SnapshotTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionQuote {
    pub market: Market,
    pub date: NaiveDate,
    pub snapshot_time: SnapshotTime,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub right: Right,
    pub bid: f64,
    pub ask: f64,
}

impl OptionQuote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    pub fn spread(&self) -> f64 {
        self.ask - self.bid
    }

    fn is_valid(&self) -> bool {
        self.bid.is_finite()
            && self.ask.is_finite()
            && self.strike.is_finite()
            && self.bid >= 0.0
            && self.ask >= self.bid
            && self.strike > 0.0
            && self.expiry > self.date
    }
}

/// Year fraction between two calendar dates, ACT/365.25.
pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

#[derive(Debug, Clone, Default)]
pub struct QuoteLoad {
    pub quotes: Vec<OptionQuote>,
    /// Rows dropped for unparseable or invariant-violating fields.
    pub skipped: usize,
}

pub fn load_quotes(
    path: &Path,
    market: Market,
    snapshot: SnapshotTime,
) -> Result<QuoteLoad, IngestError> {
    let file = open(path)?;
    read_quotes(file, market, snapshot)
}

pub fn read_quotes<R: Read>(
    reader: R,
    market: Market,
    snapshot: SnapshotTime,
) -> Result<QuoteLoad, IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &QUOTE_HEADER)?;
    let mut out = QuoteLoad::default();
    for record in rdr.records() {
        let Ok(record) = record else {
            out.skipped += 1;
            continue;
        };
        match parse_quote(&record, market) {
            Some(q) if q.snapshot_time == snapshot => out.quotes.push(q),
            Some(_) => {}
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

fn parse_quote(rec: &csv::StringRecord, market: Market) -> Option<OptionQuote> {
    if rec.len() != QUOTE_HEADER.len() {
        return None;
    }
    let right = match rec[3].trim() {
        "C" | "c" => Right::Call,
        "P" | "p" => Right::Put,
        _ => return None,
    };
    let q = OptionQuote {
        market,
        date: parse_date(&rec[0])?,
        snapshot_time: rec[1].parse().ok()?,
        expiry: parse_date(&rec[2])?,
        strike: rec[4].trim().parse().ok()?,
        right,
        bid: rec[5].trim().parse().ok()?,
        ask: rec[6].trim().parse().ok()?,
    };
    q.is_valid().then_some(q)
}

/// Writes quotes in the ingest CSV schema.
pub fn write_quotes<W: Write>(writer: W, quotes: &[OptionQuote]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(QUOTE_HEADER)?;
    for q in quotes {
        w.write_record([
            q.date.to_string(),
            q.snapshot_time.to_string(),
            q.expiry.to_string(),
            q.right.code().to_string(),
            q.strike.to_string(),
            q.bid.to_string(),
            q.ask.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Splits quotes into per-(market, date) partitions, the unit of parallel work.
pub fn partition_by_day(quotes: Vec<OptionQuote>) -> BTreeMap<(Market, NaiveDate), Vec<OptionQuote>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for q in quotes {
        out.entry((q.market, q.date)).or_default().push(q);
    }
    out
}

/// Matched call and put at one `(market, date, expiry, strike)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotePair {
    pub market: Market,
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub call_mid: f64,
    pub put_mid: f64,
    pub call_spread: f64,
    pub put_spread: f64,
    pub tau: f64,
}

impl QuotePair {
    /// Synthetic forward payoff `C - P`.
    pub fn synthetic_forward(&self) -> f64 {
        self.call_mid - self.put_mid
    }

    /// Reconstructs the two source quotes (bid/ask symmetric around the mid).
    pub fn to_quotes(&self, snapshot: SnapshotTime) -> [OptionQuote; 2] {
        let leg = |right, mid: f64, spread: f64| OptionQuote {
            market: self.market,
            date: self.date,
            snapshot_time: snapshot,
            expiry: self.expiry,
            strike: self.strike,
            right,
            bid: mid - 0.5 * spread,
            ask: mid + 0.5 * spread,
        };
        [
            leg(Right::Call, self.call_mid, self.call_spread),
            leg(Right::Put, self.put_mid, self.put_spread),
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct PairOutcome {
    pub pairs: Vec<QuotePair>,
    /// Duplicate `(expiry, strike, right)` quotes resolved by keeping the tighter one.
    pub duplicate_warnings: usize,
    pub unmatched: usize,
}

/// Pairs calls with puts at the same expiry and strike. Output is sorted by
/// `(expiry, strike)`.
pub fn pair_quotes(quotes: &[OptionQuote]) -> Result<PairOutcome, IngestError> {
    let mut out = PairOutcome::default();
    let Some(first) = quotes.first() else {
        return Ok(out);
    };
    if quotes
        .iter()
        .any(|q| q.market != first.market || q.date != first.date)
    {
        return Err(IngestError::MixedPartition);
    }

    // Strikes keyed by their bit pattern so that the map is totally ordered;
    // strikes are strictly positive so bit order equals numeric order.
    let mut legs: BTreeMap<(NaiveDate, u64), [Option<&OptionQuote>; 2]> = BTreeMap::new();
    for q in quotes {
        let slot = &mut legs.entry((q.expiry, q.strike.to_bits())).or_default()[q.right as usize];
        match slot {
            Some(existing) => {
                out.duplicate_warnings += 1;
                if q.spread() < existing.spread() {
                    *slot = Some(q);
                }
            }
            None => *slot = Some(q),
        }
    }

    for legs in legs.into_values() {
        match legs {
            [Some(c), Some(p)] => out.pairs.push(QuotePair {
                market: c.market,
                date: c.date,
                expiry: c.expiry,
                strike: c.strike,
                call_mid: c.mid(),
                put_mid: p.mid(),
                call_spread: c.spread(),
                put_spread: p.spread(),
                tau: year_fraction(c.date, c.expiry),
            }),
            _ => out.unmatched += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum mid price of either leg, index points.
    pub min_mid: f64,
    /// Maximum spread / mid of either leg.
    pub max_rel_spread: f64,
    /// Minimum surviving strikes per expiry.
    pub min_strikes: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_mid: 0.05,
            max_rel_spread: 0.25,
            min_strikes: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub low_mid: usize,
    pub wide_spread: usize,
    pub thin_expiries: usize,
    pub thin_expiry_pairs: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub groups: BTreeMap<NaiveDate, Vec<QuotePair>>,
    pub counts: FilterCounts,
}

impl FilterOutcome {
    pub fn surviving_pairs(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

/// Drops illiquid pairs, then whole expiries left with too few strikes.
pub fn apply_filters(pairs: Vec<QuotePair>, cfg: &FilterConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    let mut groups: BTreeMap<NaiveDate, Vec<QuotePair>> = BTreeMap::new();
    for p in pairs {
        if p.call_mid < cfg.min_mid || p.put_mid < cfg.min_mid {
            out.counts.low_mid += 1;
            continue;
        }
        let rel = |spread: f64, mid: f64| if mid > 0.0 { spread / mid } else { f64::INFINITY };
        if rel(p.call_spread, p.call_mid) > cfg.max_rel_spread
            || rel(p.put_spread, p.put_mid) > cfg.max_rel_spread
        {
            out.counts.wide_spread += 1;
            continue;
        }
        groups.entry(p.expiry).or_default().push(p);
    }
    for (expiry, group) in groups {
        if group.len() < cfg.min_strikes {
            out.counts.thin_expiries += 1;
            out.counts.thin_expiry_pairs += group.len();
        } else {
            out.groups.insert(expiry, group);
        }
    }
    out
}

/// Rate quotes for one date as `(tenor_years, rate_pct)`, sorted by tenor.
pub type TenorQuotes = Vec<(f64, f64)>;

/// Date-aligned macro inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroSeries {
    pub ois_par: BTreeMap<NaiveDate, TenorQuotes>,
    pub dgs_yield: BTreeMap<NaiveDate, TenorQuotes>,
    pub vix: BTreeMap<NaiveDate, f64>,
    pub rvx: BTreeMap<NaiveDate, f64>,
    /// Forward-filled onto business days.
    pub nfci: BTreeMap<NaiveDate, f64>,
}

/// The regressor inputs available for one `(market, date)` under a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroRow {
    pub rate_1y_pct: f64,
    pub rate_10y_pct: f64,
    pub vol_pct: f64,
    pub nfci: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingInput {
    Rates,
    Vol,
    Nfci,
}

impl MacroSeries {
    pub fn rates(&self, benchmark: Benchmark) -> &BTreeMap<NaiveDate, TenorQuotes> {
        match benchmark {
            Benchmark::Ois => &self.ois_par,
            Benchmark::Dgs => &self.dgs_yield,
        }
    }

    pub fn vol(&self, market: Market) -> &BTreeMap<NaiveDate, f64> {
        match market {
            Market::Spx => &self.vix,
            Market::Rut => &self.rvx,
        }
    }

    /// Fails when a series needed for `benchmark` and `markets` is absent.
    pub fn require(&self, benchmark: Benchmark, markets: &[Market]) -> Result<(), IngestError> {
        if self.rates(benchmark).is_empty() {
            return Err(IngestError::MissingSeries(match benchmark {
                Benchmark::Ois => "ois",
                Benchmark::Dgs => "dgs",
            }));
        }
        if self.nfci.is_empty() {
            return Err(IngestError::MissingSeries("nfci"));
        }
        for m in markets {
            if self.vol(*m).is_empty() {
                return Err(IngestError::MissingSeries(match m {
                    Market::Spx => "vix",
                    Market::Rut => "rvx",
                }));
            }
        }
        Ok(())
    }

    /// Regressor inputs for one row, or the first missing input.
    pub fn row(
        &self,
        date: NaiveDate,
        market: Market,
        benchmark: Benchmark,
    ) -> Result<MacroRow, MissingInput> {
        let quotes = self.rates(benchmark).get(&date).ok_or(MissingInput::Rates)?;
        let rate_1y_pct = rate_at_tenor(quotes, 1.0).ok_or(MissingInput::Rates)?;
        let rate_10y_pct = rate_at_tenor(quotes, 10.0).ok_or(MissingInput::Rates)?;
        let vol_pct = *self.vol(market).get(&date).ok_or(MissingInput::Vol)?;
        let nfci = *self.nfci.get(&date).ok_or(MissingInput::Nfci)?;
        Ok(MacroRow {
            rate_1y_pct,
            rate_10y_pct,
            vol_pct,
            nfci,
        })
    }
}

/// Quoted rate at `tenor`, linearly interpolated between quoted tenors.
/// No extrapolation.
pub fn rate_at_tenor(quotes: &[(f64, f64)], tenor: f64) -> Option<f64> {
    let idx = quotes.partition_point(|(t, _)| *t < tenor);
    let (t1, r1) = *quotes.get(idx)?;
    if t1 == tenor {
        return Some(r1);
    }
    let (t0, r0) = *quotes.get(idx.checked_sub(1)?)?;
    Some(r0 + (r1 - r0) * (tenor - t0) / (t1 - t0))
}

/// Per-series parse diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SeriesWarnings {
    pub duplicates: usize,
    pub bad_rows: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMacro {
    pub ois: BTreeMap<NaiveDate, TenorQuotes>,
    pub dgs: BTreeMap<NaiveDate, TenorQuotes>,
    pub vix: BTreeMap<NaiveDate, f64>,
    pub rvx: BTreeMap<NaiveDate, f64>,
    /// Weekly releases keyed by release date.
    pub nfci: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Clone, Default)]
pub struct MacroFiles {
    pub ois: Option<PathBuf>,
    pub dgs: Option<PathBuf>,
    pub vix: Option<PathBuf>,
    pub rvx: Option<PathBuf>,
    pub nfci: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct MacroAlignment {
    pub series: MacroSeries,
    pub warnings: BTreeMap<&'static str, SeriesWarnings>,
}

/// Reads every configured macro file and aligns them by date. Absent paths
/// yield empty series; [`MacroSeries::require`] decides whether that is fatal.
pub fn align_macro(files: &MacroFiles) -> Result<MacroAlignment, IngestError> {
    let mut raw = RawMacro::default();
    let mut warnings = BTreeMap::new();
    if let Some(p) = &files.ois {
        let (s, w) = read_tenor_series(open(p)?)?;
        raw.ois = s;
        warnings.insert("ois", w);
    }
    if let Some(p) = &files.dgs {
        let (s, w) = read_tenor_series(open(p)?)?;
        raw.dgs = s;
        warnings.insert("dgs", w);
    }
    for (name, path, slot, positive) in [
        ("vix", &files.vix, &mut raw.vix, true),
        ("rvx", &files.rvx, &mut raw.rvx, true),
        ("nfci", &files.nfci, &mut raw.nfci, false),
    ] {
        if let Some(p) = path {
            let (s, w) = read_value_series(open(p)?, positive)?;
            *slot = s;
            warnings.insert(name, w);
        }
    }
    Ok(MacroAlignment {
        series: align_series(raw),
        warnings,
    })
}

/// Joins raw series on date and forward-fills NFCI onto business days.
pub fn align_series(raw: RawMacro) -> MacroSeries {
    let last_date = [
        raw.ois.keys().next_back(),
        raw.dgs.keys().next_back(),
        raw.vix.keys().next_back(),
        raw.rvx.keys().next_back(),
        raw.nfci.keys().next_back(),
    ]
    .into_iter()
    .flatten()
    .max()
    .copied();
    let nfci = match last_date {
        Some(end) => forward_fill_business_days(&raw.nfci, end),
        None => BTreeMap::new(),
    };
    MacroSeries {
        ois_par: raw.ois,
        dgs_yield: raw.dgs,
        vix: raw.vix,
        rvx: raw.rvx,
        nfci,
    }
}

pub fn is_business_day(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Carries each release forward to every business day until the next
/// release, through `end`. A day only ever sees releases dated on or
/// before it.
pub fn forward_fill_business_days(
    releases: &BTreeMap<NaiveDate, f64>,
    end: NaiveDate,
) -> BTreeMap<NaiveDate, f64> {
    let mut out = BTreeMap::new();
    let Some((&start, _)) = releases.first_key_value() else {
        return out;
    };
    let mut current = None;
    let mut day = start;
    while day <= end {
        if let Some(v) = releases.get(&day) {
            current = Some(*v);
        }
        if let (Some(v), true) = (current, is_business_day(day)) {
            out.insert(day, v);
        }
        day = match day.checked_add_days(Days::new(1)) {
            Some(d) => d,
            None => break,
        };
    }
    out
}

/// Reads a `date,value` series. Duplicate dates: last occurrence wins.
pub fn read_value_series<R: Read>(
    reader: R,
    require_positive: bool,
) -> Result<(BTreeMap<NaiveDate, f64>, SeriesWarnings), IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &VALUE_HEADER)?;
    let mut out = BTreeMap::new();
    let mut warn = SeriesWarnings::default();
    for record in rdr.records() {
        let parsed = record.ok().and_then(|r| {
            let d = parse_date(r.get(0)?)?;
            let v: f64 = r.get(1)?.trim().parse().ok()?;
            (v.is_finite() && (!require_positive || v > 0.0)).then_some((d, v))
        });
        match parsed {
            Some((d, v)) => {
                if out.insert(d, v).is_some() {
                    warn.duplicates += 1;
                }
            }
            None => warn.bad_rows += 1,
        }
    }
    Ok((out, warn))
}

/// Reads a `date,tenor_years,rate_pct` series. A repeated `(date, tenor)`
/// keeps the last occurrence.
pub fn read_tenor_series<R: Read>(
    reader: R,
) -> Result<(BTreeMap<NaiveDate, TenorQuotes>, SeriesWarnings), IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &TENOR_HEADER)?;
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    let mut warn = SeriesWarnings::default();
    for record in rdr.records() {
        let parsed = record.ok().and_then(|r| {
            let d = parse_date(r.get(0)?)?;
            let t: f64 = r.get(1)?.trim().parse().ok()?;
            let v: f64 = r.get(2)?.trim().parse().ok()?;
            (t.is_finite() && t > 0.0 && v.is_finite()).then_some((d, t, v))
        });
        match parsed {
            Some((d, t, v)) => {
                if by_date.entry(d).or_default().insert(t.to_bits(), (t, v)).is_some() {
                    warn.duplicates += 1;
                }
            }
            None => warn.bad_rows += 1,
        }
    }
    let out = by_date
        .into_iter()
        .map(|(d, m)| (d, m.into_values().collect()))
        .collect();
    Ok((out, warn))
}

pub fn write_value_series<W: Write>(
    writer: W,
    series: &BTreeMap<NaiveDate, f64>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VALUE_HEADER)?;
    for (d, v) in series {
        w.write_record([d.to_string(), v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_tenor_series<W: Write>(
    writer: W,
    series: &BTreeMap<NaiveDate, TenorQuotes>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TENOR_HEADER)?;
    for (d, quotes) in series {
        for (t, r) in quotes {
            w.write_record([d.to_string(), t.to_string(), r.to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}
