//! Rendering run results as JSON or markdown tables.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use bloomnet::harness::{AblationTable, RunResult};
use bloomnet::metrics::{paired_significance, MeanStd, Significance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "markdown" | "markdown-table" | "md" => Ok(Self::Markdown),
            other => bail!("unknown report format {other:?} (expected json or markdown)"),
        }
    }
}

const HEADER: [&str; 5] = ["model", "IID accuracy", "IID macro-F1", "OOD accuracy", "OOD macro-F1"];

fn cell(m: Option<&MeanStd>) -> String {
    match m {
        Some(m) => format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std),
        None => "n/a".into(),
    }
}

fn row(r: &RunResult) -> [String; 5] {
    let a = &r.aggregates;
    [
        r.model_name.clone(),
        cell(Some(&a.iid_accuracy)),
        cell(Some(&a.iid_macro_f1)),
        cell(a.ood_accuracy.as_ref()),
        cell(a.ood_macro_f1.as_ref()),
    ]
}

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

/// Render results, one row per run, with scores in percent as mean ± std.
///
/// JSON output is the pretty-printed result list and is byte-identical for
/// identical inputs.
pub fn emit_report(results: &[RunResult], format: ReportFormat) -> Result<String> {
    if results.is_empty() {
        bail!("nothing to report: no results");
    }
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(results)? + "\n",
        ReportFormat::Markdown => markdown(&HEADER, &results.iter().map(|r| row(r).to_vec()).collect::<Vec<_>>()),
    })
}

/// Significance of one model against the reference, on per-fold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub result: RunResult,
    /// Paired test against the reference's per-fold IID accuracy; absent for the reference itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid_accuracy_vs_reference: Option<Significance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_accuracy_vs_reference: Option<Significance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub fold_plan_digest: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Pair every run with the first one, fold by fold.
    pub fn new(results: Vec<RunResult>, fold_plan_digest: String) -> Result<Self> {
        let Some(reference) = results.first().cloned() else {
            bail!("nothing to compare: no results");
        };
        let fold_scores = |r: &RunResult, ood: bool| -> Option<Vec<f64>> {
            r.per_fold
                .iter()
                .map(|f| if ood { f.ood_accuracy } else { Some(f.iid_accuracy) })
                .collect()
        };
        let mut rows = Vec::with_capacity(results.len());
        for (i, result) in results.into_iter().enumerate() {
            let (iid, ood) = if i == 0 {
                (None, None)
            } else {
                let test = |ood: bool| -> Result<Option<Significance>> {
                    match (fold_scores(&reference, ood), fold_scores(&result, ood)) {
                        (Some(a), Some(b)) => Ok(Some(paired_significance(&a, &b)?)),
                        _ => Ok(None),
                    }
                };
                (test(false)?, test(true)?)
            };
            rows.push(ComparisonRow {
                result,
                iid_accuracy_vs_reference: iid,
                ood_accuracy_vs_reference: ood,
            });
        }
        Ok(Self {
            reference: reference.model_name,
            fold_plan_digest,
            rows,
        })
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        if format == ReportFormat::Json {
            return Ok(serde_json::to_string_pretty(self)? + "\n");
        }
        let p = |s: &Option<Significance>, exact: bool| match s {
            Some(s) if exact => format!("{:.4}", s.permutation_p_value),
            Some(s) => format!("{:.4}", s.t_p_value),
            None => "–".into(),
        };
        let mut header = HEADER.to_vec();
        header.extend(["IID p (t-test)", "IID p (permutation)", "OOD p (t-test)", "OOD p (permutation)"]);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = row(&r.result).to_vec();
                cells.extend([
                    p(&r.iid_accuracy_vs_reference, false),
                    p(&r.iid_accuracy_vs_reference, true),
                    p(&r.ood_accuracy_vs_reference, false),
                    p(&r.ood_accuracy_vs_reference, true),
                ]);
                cells
            })
            .collect();
        Ok(format!(
            "{}\np-values are paired two-sided tests of per-fold accuracy against {}.\n",
            markdown(&header, &rows),
            self.reference
        ))
    }
}

/// Any result file the CLI writes, for `report`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ResultFile {
    Comparison(Comparison),
    Ablation(AblationTable),
    Runs(Vec<RunResult>),
    Run(Box<RunResult>),
}

impl ResultFile {
    pub fn into_runs(self) -> Vec<RunResult> {
        match self {
            ResultFile::Comparison(c) => c.rows.into_iter().map(|r| r.result).collect(),
            ResultFile::Ablation(t) => t.rows.into_iter().map(|r| r.result).collect(),
            ResultFile::Runs(v) => v,
            ResultFile::Run(r) => vec![*r],
        }
    }
}

#[cfg(test)]
mod tests {
    use bloomnet::harness::{Aggregates, FoldResult, ProtocolNotes};

    use super::*;

    fn run(name: &str, accs: &[f64]) -> RunResult {
        let per_fold: Vec<FoldResult> = accs
            .iter()
            .enumerate()
            .map(|(fold, &a)| FoldResult {
                fold,
                iid_accuracy: a,
                iid_macro_f1: a,
                ood_accuracy: None,
                ood_macro_f1: None,
                epochs_ran: 1,
                best_epoch: 1,
                train_size: 8,
                val_size: 1,
                test_size: 2,
                ood_size: None,
                initial_checksum: "a".into(),
                trained_checksum: "b".into(),
            })
            .collect();
        RunResult {
            model_name: name.into(),
            k: accs.len(),
            aggregates: Aggregates::from_folds(&per_fold).unwrap(),
            per_fold,
            ood_full: None,
            protocol: ProtocolNotes {
                std: String::new(),
                validation: String::new(),
                early_stopping: String::new(),
                ood: String::new(),
            },
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(emit_report(&[], ReportFormat::Json).is_err());
        assert!(emit_report(&[], ReportFormat::Markdown).is_err());
    }

    #[test]
    fn single_result_gives_header_and_one_row() {
        let md = emit_report(&[run("m", &[0.5, 0.7])], ReportFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "| model | IID accuracy | IID macro-F1 | OOD accuracy | OOD macro-F1 |");
        assert_eq!(lines[2], "| m | 60.00 ± 14.14 | 60.00 ± 14.14 | n/a | n/a |");
    }

    #[test]
    fn json_is_byte_stable_and_round_trips() {
        let rs = vec![run("a", &[0.1, 0.2]), run("b", &[0.3, 0.4])];
        let a = emit_report(&rs, ReportFormat::Json).unwrap();
        assert_eq!(a, emit_report(&rs.clone(), ReportFormat::Json).unwrap());
        let back: ResultFile = serde_json::from_str(&a).unwrap();
        assert_eq!(back.into_runs(), rs);
    }

    #[test]
    fn comparison_pairs_against_the_first_model() {
        let c = Comparison::new(vec![run("ref", &[0.75; 5]), run("x", &[0.71, 0.64, 0.69, 0.73, 0.66])], "d".into()).unwrap();
        assert!(c.rows[0].iid_accuracy_vs_reference.is_none());
        let s = c.rows[1].iid_accuracy_vs_reference.as_ref().unwrap();
        assert!((s.permutation_p_value - 0.0625).abs() < 1e-12);
        assert!(c.rows[1].ood_accuracy_vs_reference.is_none());
    }
}
