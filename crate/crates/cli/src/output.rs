//! CSV emission. Every file starts with a `# sparsebag <kind> v1` comment
//! line and is written through a temporary file that is renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use sparsebag::experiment::{best_over, BestSummary, Scheme, SummaryLabel, SweepOutput, SweepRecord};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join(name))
}

fn csv_bytes(kind: &str, header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut out = format!("# sparsebag {kind} v{SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    out
}

fn record_row(r: &SweepRecord) -> Vec<String> {
    vec![
        r.scheme.name().to_string(),
        r.m.to_string(),
        r.ratio.to_string(),
        r.l.to_string(),
        r.k.to_string(),
        r.lambda.to_string(),
        r.mean_snr_db.to_string(),
        r.std_snr_db.to_string(),
        r.trials.to_string(),
        r.non_converged_rate.to_string(),
        r.sentinel_hits.to_string(),
        r.flagged().to_string(),
    ]
}

const RECORD_HEADER: [&str; 12] = [
    "scheme",
    "m",
    "ratio",
    "L",
    "K",
    "lambda",
    "mean_snr_db",
    "std_snr_db",
    "trials",
    "non_converged_rate",
    "sentinel_hits",
    "flagged",
];

pub fn records_csv(records: &[SweepRecord]) -> Vec<u8> {
    csv_bytes("records", &RECORD_HEADER, records.iter().map(record_row).collect())
}

pub fn best_csv(best: &[BestSummary]) -> Vec<u8> {
    let mut header = vec!["label"];
    header.extend_from_slice(&RECORD_HEADER[1..]);
    let rows = best
        .iter()
        .map(|b| {
            let mut row = vec![b.label.name().to_string()];
            row.extend(record_row(&b.best).into_iter().skip(1));
            row
        })
        .collect();
    csv_bytes("best", &header, rows)
}

/// Table-style summary: one row per label, one column per `m`.
pub fn table_csv(best: &[BestSummary]) -> Vec<u8> {
    let mut ms: Vec<usize> = best.iter().map(|b| b.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let m_cols: Vec<String> = ms.iter().map(|m| format!("m={m}")).collect();
    let mut header = vec!["label"];
    header.extend(m_cols.iter().map(String::as_str));
    let labels = [
        SummaryLabel::L1,
        SummaryLabel::ConventionalBagging,
        SummaryLabel::Bagging,
        SummaryLabel::Bolasso,
    ];
    let rows = labels
        .iter()
        .filter(|l| best.iter().any(|b| b.label == **l))
        .map(|l| {
            let mut row = vec![l.name().to_string()];
            row.extend(ms.iter().map(|m| {
                best.iter()
                    .find(|b| b.label == *l && b.m == *m)
                    .map(|b| b.best.mean_snr_db.to_string())
                    .unwrap_or_default()
            }));
            row
        })
        .collect();
    csv_bytes("table", &header, rows)
}

/// Plot data for one `m`: the best-λ Bagging curve per `(ratio, K)` and
/// reference rows for ℓ1 and the best Bolasso cell.
pub fn figure_csv(out: &SweepOutput, m: usize) -> Vec<u8> {
    let header = ["series", "ratio", "K", "lambda", "mean_snr", "std_snr"];
    let row = |series: &str, r: &SweepRecord| {
        vec![
            series.to_string(),
            r.ratio.to_string(),
            r.k.to_string(),
            r.lambda.to_string(),
            r.mean_snr_db.to_string(),
            r.std_snr_db.to_string(),
        ]
    };
    let mut rows: Vec<Vec<String>> = out
        .best_lambda
        .iter()
        .filter(|r| r.m == m && r.scheme == Scheme::Bagging)
        .map(|r| row("bagging", r))
        .collect();
    let best = best_over(&out.records);
    for (label, series) in [(SummaryLabel::L1, "l1"), (SummaryLabel::Bolasso, "bolasso_best")] {
        if let Some(b) = best.iter().find(|b| b.label == label && b.m == m) {
            rows.push(row(series, &b.best));
        }
    }
    csv_bytes("figure", &header, rows)
}
