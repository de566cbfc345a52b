//! Mean/median summary tables over per-patient metric records, plus the
//! CSV surfaces: per-patient rows `subject,region,dice,hd95,penalized`
//! (append-friendly) and summary rows `stat,region,dice,hd95,n` printed
//! with 6 significant digits in fixed WT, TC, ET order.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::metrics::{MetricsRecord, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Mean,
    Median,
}

impl Stat {
    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Median => "median",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Stat::Mean),
            "median" => Ok(Stat::Median),
            _ => Err(Error::usage(format!(
                "unknown stat {s:?}, expected mean|median"
            ))),
        }
    }
}

/// Aggregated (dice, hd95) per region.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub stat: Stat,
    pub n: usize,
    /// Rows in WT, TC, ET order: (region, dice, hd95).
    pub rows: [(Region, f64, f64); 3],
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with even-count midpoint averaging.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Aggregate records into one table. Every subject must contribute exactly
/// one record per region.
pub fn aggregate(records: &[MetricsRecord], stat: Stat) -> Result<SummaryTable> {
    if records.is_empty() {
        return Err(Error::usage("no records to aggregate"));
    }
    let mut by_subject: BTreeMap<&str, [Option<&MetricsRecord>; 3]> = BTreeMap::new();
    for r in records {
        let slot = match r.region {
            Region::Wt => 0,
            Region::Tc => 1,
            Region::Et => 2,
        };
        let entry = by_subject.entry(&r.subject).or_insert([None; 3]);
        if entry[slot].is_some() {
            return Err(Error::usage(format!(
                "subject {:?} has duplicate {} records",
                r.subject,
                r.region.name()
            )));
        }
        entry[slot] = Some(r);
    }
    for (subject, slots) in &by_subject {
        for (i, region) in Region::ALL.iter().enumerate() {
            if slots[i].is_none() {
                return Err(Error::usage(format!(
                    "subject {subject:?} is missing its {} record",
                    region.name()
                )));
            }
        }
    }

    let reduce = |values: &[f64]| match stat {
        Stat::Mean => mean(values),
        Stat::Median => median(values),
    };

    let rows = [0usize, 1, 2].map(|slot| {
        let dice: Vec<f64> = by_subject.values().map(|s| s[slot].unwrap().dice).collect();
        let hd: Vec<f64> = by_subject.values().map(|s| s[slot].unwrap().hd95).collect();
        (Region::ALL[slot], reduce(&dice), reduce(&hd))
    });

    Ok(SummaryTable {
        stat,
        n: by_subject.len(),
        rows,
    })
}

/// Format with `sig` significant digits in plain decimal notation.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Summary CSV: header `stat,region,dice,hd95,n`, rows WT, TC, ET.
pub fn write_summary_csv(table: &SummaryTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("stat,region,dice,hd95,n\n");
    for (region, dice, hd95) in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            table.stat.name(),
            region.name(),
            fmt_sig(*dice, 6),
            fmt_sig(*hd95, 6),
            table.n
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())?;
    Ok(())
}

pub const RECORDS_HEADER: &str = "subject,region,dice,hd95,penalized";

/// One per-patient CSV row. Metric values use the shortest decimal form
/// that round-trips the f64 exactly.
pub fn record_csv_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.subject,
        r.region.name(),
        r.dice,
        r.hd95,
        r.penalized
    )
}

/// Append records to a per-patient CSV, writing the header only when the
/// file does not exist yet. The whole file is rewritten atomically.
pub fn append_records_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut content = match std::fs::read_to_string(path) {
        Ok(existing) => existing,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            format!("{RECORDS_HEADER}\n")
        }
        Err(e) => return Err(e.into()),
    };
    for r in records {
        content.push_str(&record_csv_row(r));
        content.push('\n');
    }
    write_atomic(path, content.as_bytes())?;
    Ok(())
}

/// Read a per-patient CSV back into records.
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::format(format!("cannot read records CSV: {e}")))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::format(format!("bad CSV row: {e}")))?;
        if row.len() != 5 {
            return Err(Error::format(format!(
                "expected 5 CSV columns, got {}",
                row.len()
            )));
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::format(format!("bad {what} value {s:?}")))
        };
        records.push(MetricsRecord {
            subject: row[0].to_string(),
            region: Region::from_name(&row[1])?,
            dice: parse_f64(&row[2], "dice")?,
            hd95: parse_f64(&row[3], "hd95")?,
            penalized: match &row[4] {
                "true" => true,
                "false" => false,
                other => return Err(Error::format(format!("bad penalized value {other:?}"))),
            },
        });
    }
    Ok(records)
}
