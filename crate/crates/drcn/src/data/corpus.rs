//! Sentence-pair corpus loading from TSV and JSONL files.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{DrcnError, Result};

use super::tokenize;

/// One labeled sentence pair; `group_id` ties answer-selection candidates to
/// their question for ranking metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub premise: Vec<String>,
    pub hypothesis: Vec<String>,
    pub label: u32,
    pub group_id: Option<String>,
}

/// Label vocabulary. Fixed maps keep checkpoints portable across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMap {
    /// entailment=0, neutral=1, contradiction=2
    Nli,
    /// negative=0, positive=1 (also accepts literal 0/1)
    Binary,
}

impl LabelMap {
    pub fn for_classes(num_classes: usize) -> Result<LabelMap> {
        match num_classes {
            2 => Ok(LabelMap::Binary),
            3 => Ok(LabelMap::Nli),
            n => Err(DrcnError::Config(format!("no label map for {n} classes"))),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            LabelMap::Nli => 3,
            LabelMap::Binary => 2,
        }
    }

    pub fn parse(self, s: &str) -> Option<u32> {
        let s = s.trim().to_lowercase();
        match self {
            LabelMap::Nli => match s.as_str() {
                "entailment" => Some(0),
                "neutral" => Some(1),
                "contradiction" => Some(2),
                _ => None,
            },
            LabelMap::Binary => match s.as_str() {
                "negative" | "0" => Some(0),
                "positive" | "1" => Some(1),
                _ => None,
            },
        }
    }

    pub fn name(self, id: u32) -> &'static str {
        match (self, id) {
            (LabelMap::Nli, 0) => "entailment",
            (LabelMap::Nli, 1) => "neutral",
            (LabelMap::Nli, 2) => "contradiction",
            (LabelMap::Binary, 0) => "negative",
            (LabelMap::Binary, 1) => "positive",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Tsv,
    Jsonl,
}

impl DataFormat {
    /// Guess from the file extension; TSV when in doubt.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Tsv,
        }
    }
}

#[derive(Debug)]
pub struct LoadReport {
    pub pairs: Vec<SentencePair>,
    /// Rows dropped for unknown labels or missing fields.
    pub skipped: usize,
}

#[derive(Deserialize)]
struct JsonRow {
    #[serde(alias = "gold_label")]
    label: String,
    sentence1: String,
    sentence2: String,
    #[serde(default)]
    group_id: Option<String>,
}

/// Load sentence pairs. TSV columns are `label<TAB>sentence1<TAB>sentence2`
/// with an optional fourth `group_id` column; JSONL rows carry keys `label`
/// (alias `gold_label`, so SNLI distributions load directly), `sentence1`,
/// `sentence2` and optional `group_id`. Rows with unknown labels are skipped
/// and counted.
pub fn load_pairs(path: &Path, format: DataFormat, labels: LabelMap) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| DrcnError::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            DataFormat::Tsv => parse_tsv_row(&line, labels),
            DataFormat::Jsonl => parse_jsonl_row(&line, labels),
        };
        match parsed {
            Some(pair) => pairs.push(pair),
            None => skipped += 1,
        }
    }
    if pairs.is_empty() {
        return Err(DrcnError::EmptyDataset(format!(
            "{} contained no usable rows ({} skipped)",
            path.display(),
            skipped
        )));
    }
    Ok(LoadReport { pairs, skipped })
}

fn build_pair(
    label: &str,
    sentence1: &str,
    sentence2: &str,
    group_id: Option<String>,
    labels: LabelMap,
) -> Option<SentencePair> {
    let label = labels.parse(label)?;
    let premise = tokenize(sentence1);
    let hypothesis = tokenize(sentence2);
    if premise.is_empty() || hypothesis.is_empty() {
        return None;
    }
    Some(SentencePair { premise, hypothesis, label, group_id })
}

fn parse_tsv_row(line: &str, labels: LabelMap) -> Option<SentencePair> {
    let mut cols = line.split('\t');
    let label = cols.next()?;
    let s1 = cols.next()?;
    let s2 = cols.next()?;
    let group = cols.next().map(|g| g.to_string());
    build_pair(label, s1, s2, group, labels)
}

fn parse_jsonl_row(line: &str, labels: LabelMap) -> Option<SentencePair> {
    let row: JsonRow = serde_json::from_str(line).ok()?;
    build_pair(&row.label, &row.sentence1, &row.sentence2, row.group_id, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_tsv_row() {
        let f = write_tmp("entailment\ta man sleeps\ta person rests\n");
        let report = load_pairs(f.path(), DataFormat::Tsv, LabelMap::Nli).unwrap();
        assert_eq!(report.pairs.len(), 1);
        assert_eq!(report.skipped, 0);
        let p = &report.pairs[0];
        assert_eq!(p.label, 0);
        assert_eq!(p.premise, vec!["a", "man", "sleeps"]);
        assert_eq!(p.hypothesis, vec!["a", "person", "rests"]);
    }

    #[test]
    fn bad_rows_are_skipped_and_counted() {
        let f = write_tmp(
            "entailment\ta\tb\nBOGUS\tc\td\nneutral\te\tf\n",
        );
        let report = load_pairs(f.path(), DataFormat::Tsv, LabelMap::Nli).unwrap();
        assert_eq!(report.pairs.len(), 2);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn jsonl_with_gold_label_alias_and_group() {
        let f = write_tmp(concat!(
            r#"{"gold_label": "contradiction", "sentence1": "A cat.", "sentence2": "No cat."}"#,
            "\n",
            r#"{"label": "positive", "sentence1": "x", "sentence2": "y", "group_id": "q1"}"#,
            "\n",
        ));
        let nli = load_pairs(f.path(), DataFormat::Jsonl, LabelMap::Nli).unwrap();
        assert_eq!(nli.pairs.len(), 1);
        assert_eq!(nli.pairs[0].label, 2);
        assert_eq!(nli.skipped, 1); // the binary row has no NLI label

        let bin = load_pairs(f.path(), DataFormat::Jsonl, LabelMap::Binary).unwrap();
        assert_eq!(bin.pairs.len(), 1);
        assert_eq!(bin.pairs[0].group_id.as_deref(), Some("q1"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_pairs(Path::new("/nonexistent/x.tsv"), DataFormat::Tsv, LabelMap::Nli)
            .unwrap_err();
        assert!(matches!(err, DrcnError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/x.tsv"));
    }

    #[test]
    fn zero_usable_rows_is_empty_dataset_error() {
        let f = write_tmp("junk\ta\tb\n");
        let err = load_pairs(f.path(), DataFormat::Tsv, LabelMap::Nli).unwrap_err();
        assert!(matches!(err, DrcnError::EmptyDataset(_)));
    }

    #[test]
    fn label_histogram_matches_independent_scan() {
        // 10k synthetic rows; the oracle is a plain line scan counting label
        // prefixes, independent of the loader.
        let labels = ["entailment", "neutral", "contradiction"];
        let mut content = String::new();
        for i in 0..10_000 {
            let l = labels[(i * 7 + 3) % 3];
            content.push_str(&format!("{l}\tsentence number {i}\tanother {i}\n"));
        }
        let f = write_tmp(&content);
        let report = load_pairs(f.path(), DataFormat::Tsv, LabelMap::Nli).unwrap();
        assert_eq!(report.pairs.len(), 10_000);
        let mut hist = [0usize; 3];
        for p in &report.pairs {
            hist[p.label as usize] += 1;
        }
        let mut oracle = [0usize; 3];
        for line in content.lines() {
            for (i, l) in labels.iter().enumerate() {
                if line.starts_with(l) {
                    oracle[i] += 1;
                    break;
                }
            }
        }
        assert_eq!(hist, oracle);
    }
}
