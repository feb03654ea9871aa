//! Score-file readers and plot-table writers.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AttemptScore, DetCurve, EvalError, MapMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionLabel {
    #[serde(rename = "bonafide")]
    BonaFide,
    #[serde(rename = "morph")]
    Morph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub id: String,
    pub label: DetectionLabel,
    pub score: f64,
}

/// One quality score tagged with the dataset or subset it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    pub source_label: String,
    pub value: f64,
}

#[derive(Deserialize)]
struct QualityRow {
    #[allow(dead_code)]
    id: String,
    subset: String,
    score: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Reads `morph_id,slot,attempt,frs_id,score`.
pub fn read_attempt_scores<R: Read>(reader: R) -> Result<Vec<AttemptScore>, EvalError> {
    read_rows(reader)
}

/// Reads `id,label,score` with labels `bonafide` or `morph`.
pub fn read_detection_scores<R: Read>(reader: R) -> Result<Vec<DetectionScore>, EvalError> {
    read_rows(reader)
}

/// Reads `id,subset,score`.
pub fn read_quality_scores<R: Read>(reader: R) -> Result<Vec<ScoreSample>, EvalError> {
    let rows: Vec<QualityRow> = read_rows(reader)?;
    Ok(rows
        .into_iter()
        .map(|r| ScoreSample {
            source_label: r.subset,
            value: r.score,
        })
        .collect())
}

/// Splits detection scores into (bona fide, attack).
pub fn split_detection(scores: &[DetectionScore]) -> (Vec<f64>, Vec<f64>) {
    let mut bona_fide = Vec::new();
    let mut attack = Vec::new();
    for s in scores {
        match s.label {
            DetectionLabel::BonaFide => bona_fide.push(s.score),
            DetectionLabel::Morph => attack.push(s.score),
        }
    }
    (bona_fide, attack)
}

/// Values of one subset, in file order.
pub fn subset_values(samples: &[ScoreSample], subset: &str) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| s.source_label == subset)
        .map(|s| s.value)
        .collect()
}

/// Distinct subset labels in order of first appearance.
pub fn subsets(samples: &[ScoreSample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.source_label) {
            out.push(s.source_label.clone());
        }
    }
    out
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn rate(v: f64) -> String {
    format!("{v:.6}")
}

/// Rows are attempts, columns "at least c systems".
pub fn write_map_csv<W: Write>(map: &MapMatrix, w: W) -> Result<(), EvalError> {
    let mut wtr = writer(w);
    let mut header = vec!["attempts".to_string()];
    header.extend((1..=map.systems()).map(|c| c.to_string()));
    wtr.write_record(&header)?;
    for (r, row) in map.cells.iter().enumerate() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(row.iter().map(|&v| rate(v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_det_csv<W: Write>(curve: &DetCurve, w: W) -> Result<(), EvalError> {
    let mut wtr = writer(w);
    wtr.write_record(["threshold", "macer", "bpcer"])?;
    for p in &curve.points {
        wtr.write_record([p.threshold.to_string(), rate(p.macer), rate(p.bpcer)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub struct KlRow {
    pub reference: String,
    pub subset: String,
    pub kl: f64,
}

pub fn write_kld_csv<W: Write>(rows: &[KlRow], w: W) -> Result<(), EvalError> {
    let mut wtr = writer(w);
    wtr.write_record(["reference", "subset", "kl"])?;
    for r in rows {
        wtr.write_record([r.reference.clone(), r.subset.clone(), rate(r.kl)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_kde_csv<W: Write>(tables: &[(String, Vec<(f64, f64)>)], w: W) -> Result<(), EvalError> {
    let mut wtr = writer(w);
    wtr.write_record(["subset", "x", "density"])?;
    for (subset, points) in tables {
        for (x, d) in points {
            wtr.write_record([subset.clone(), format!("{x:.6}"), format!("{d:.6}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
