//! Token-level evaluation of predicted label sequences.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{gold} gold sequences but {predicted} predicted")]
    SequenceCount { gold: usize, predicted: usize },
    #[error("sequence {index}: {gold} gold labels but {predicted} predicted")]
    SequenceLength { index: usize, gold: usize, predicted: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub predicted_count: usize,
    pub gold_count: usize,
    pub correct_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Per-label precision/recall/F plus macro and micro averages and accuracy.
///
/// Macro averages weight each label equally and run over labels that occur
/// in the gold data; micro averages pool the raw counts, so with one
/// predicted label per token micro precision, micro recall, and accuracy
/// all coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_label: BTreeMap<String, LabelMetrics>,
    pub macro_avg: Averages,
    pub micro_avg: Averages,
    pub accuracy: f64,
    pub total_tokens: usize,
}

fn ratio(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Token-level comparison of predictions against gold labels.
pub fn evaluate(
    gold: &[Vec<String>],
    predicted: &[Vec<String>],
) -> Result<EvaluationReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::SequenceCount { gold: gold.len(), predicted: predicted.len() });
    }
    let mut gold_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut correct_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    let mut correct_total = 0usize;

    for (index, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::SequenceLength {
                index,
                gold: g.len(),
                predicted: p.len(),
            });
        }
        for (gt, pt) in g.iter().zip(p) {
            total += 1;
            *gold_counts.entry(gt).or_insert(0) += 1;
            *predicted_counts.entry(pt).or_insert(0) += 1;
            if gt == pt {
                correct_total += 1;
                *correct_counts.entry(gt).or_insert(0) += 1;
            }
        }
    }

    let mut labels: Vec<&str> = gold_counts.keys().copied().collect();
    for label in predicted_counts.keys() {
        if !gold_counts.contains_key(label) {
            labels.push(label);
        }
    }
    labels.sort_unstable();

    let mut per_label = BTreeMap::new();
    let mut macro_sum = Averages::default();
    let mut macro_labels = 0usize;
    for label in labels {
        let gold_count = gold_counts.get(label).copied().unwrap_or(0);
        let predicted_count = predicted_counts.get(label).copied().unwrap_or(0);
        let correct_count = correct_counts.get(label).copied().unwrap_or(0);
        let precision = ratio(correct_count, predicted_count);
        let recall = ratio(correct_count, gold_count);
        let f = f_measure(precision, recall);
        per_label.insert(
            label.to_string(),
            LabelMetrics {
                precision,
                recall,
                f_measure: f,
                predicted_count,
                gold_count,
                correct_count,
            },
        );
        if gold_count > 0 {
            macro_sum.precision += precision;
            macro_sum.recall += recall;
            macro_sum.f_measure += f;
            macro_labels += 1;
        }
    }

    let macro_avg = if macro_labels == 0 {
        Averages::default()
    } else {
        Averages {
            precision: macro_sum.precision / macro_labels as f64,
            recall: macro_sum.recall / macro_labels as f64,
            f_measure: macro_sum.f_measure / macro_labels as f64,
        }
    };
    let micro_precision = ratio(correct_total, total);
    let micro_recall = ratio(correct_total, total);
    let micro_avg = Averages {
        precision: micro_precision,
        recall: micro_recall,
        f_measure: f_measure(micro_precision, micro_recall),
    };

    Ok(EvaluationReport {
        per_label,
        macro_avg,
        micro_avg,
        accuracy: ratio(correct_total, total),
        total_tokens: total,
    })
}

impl EvaluationReport {
    /// Human-readable table (percentages, two decimals) followed by a
    /// machine-readable `key=value` block at full precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let pct = |v: f64| 100.0 * v;
        let _ = writeln!(
            out,
            "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "label", "prec", "recall", "f1", "pred", "gold", "correct"
        );
        for (label, m) in &self.per_label {
            let _ = writeln!(
                out,
                "{:<24} {:>9.2} {:>9.2} {:>9.2} {:>9} {:>9} {:>9}",
                label,
                pct(m.precision),
                pct(m.recall),
                pct(m.f_measure),
                m.predicted_count,
                m.gold_count,
                m.correct_count
            );
        }
        let _ = writeln!(
            out,
            "{:<24} {:>9.2} {:>9.2} {:>9.2}",
            "macro-average",
            pct(self.macro_avg.precision),
            pct(self.macro_avg.recall),
            pct(self.macro_avg.f_measure)
        );
        let _ = writeln!(
            out,
            "{:<24} {:>9.2} {:>9.2} {:>9.2}",
            "micro-average",
            pct(self.micro_avg.precision),
            pct(self.micro_avg.recall),
            pct(self.micro_avg.f_measure)
        );
        let _ = writeln!(out, "{:<24} {:>9.2}", "accuracy", pct(self.accuracy));
        let _ = writeln!(out, "{:<24} {:>9}", "tokens", self.total_tokens);

        let _ = writeln!(out);
        for (label, m) in &self.per_label {
            let _ = writeln!(out, "label.{label}.precision={}", m.precision);
            let _ = writeln!(out, "label.{label}.recall={}", m.recall);
            let _ = writeln!(out, "label.{label}.f_measure={}", m.f_measure);
            let _ = writeln!(out, "label.{label}.predicted={}", m.predicted_count);
            let _ = writeln!(out, "label.{label}.gold={}", m.gold_count);
            let _ = writeln!(out, "label.{label}.correct={}", m.correct_count);
        }
        let _ = writeln!(out, "macro.precision={}", self.macro_avg.precision);
        let _ = writeln!(out, "macro.recall={}", self.macro_avg.recall);
        let _ = writeln!(out, "macro.f_measure={}", self.macro_avg.f_measure);
        let _ = writeln!(out, "micro.precision={}", self.micro_avg.precision);
        let _ = writeln!(out, "micro.recall={}", self.micro_avg.recall);
        let _ = writeln!(out, "micro.f_measure={}", self.micro_avg.f_measure);
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "tokens={}", self.total_tokens);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter().map(|s| s.iter().map(|l| l.to_string()).collect()).collect()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gold = seqs(&[&["A", "B"], &["B", "A", "A"]]);
        let report = evaluate(&gold, &gold).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.macro_avg.f_measure, 1.0);
        assert_eq!(report.micro_avg.f_measure, 1.0);
        for metrics in report.per_label.values() {
            assert_eq!(metrics.precision, 1.0);
            assert_eq!(metrics.recall, 1.0);
            assert_eq!(metrics.f_measure, 1.0);
        }
    }

    #[test]
    fn hand_counted_example() {
        let gold = seqs(&[&["A", "A", "B", "B"]]);
        let predicted = seqs(&[&["A", "B", "B", "B"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        let a = report.per_label["A"];
        assert_eq!(a.precision, 1.0);
        assert_eq!(a.recall, 0.5);
        assert!((a.f_measure - 2.0 / 3.0).abs() < 1e-12);
        let b = report.per_label["B"];
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(b.recall, 1.0);
        assert!((b.f_measure - 0.8).abs() < 1e-12);
        assert_eq!(report.accuracy, 0.75);
    }

    #[test]
    fn micro_precision_equals_recall_equals_accuracy() {
        let gold = seqs(&[&["A", "B", "C"], &["C", "C"]]);
        let predicted = seqs(&[&["A", "C", "C"], &["B", "C"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        assert_eq!(report.micro_avg.precision, report.accuracy);
        assert_eq!(report.micro_avg.recall, report.accuracy);
    }

    #[test]
    fn permuting_sequences_leaves_report_unchanged() {
        let gold = seqs(&[&["A", "B"], &["B", "B"], &["A"]]);
        let predicted = seqs(&[&["A", "A"], &["B", "A"], &["B"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        let gold_perm = seqs(&[&["A"], &["A", "B"], &["B", "B"]]);
        let predicted_perm = seqs(&[&["B"], &["A", "A"], &["B", "A"]]);
        let permuted = evaluate(&gold_perm, &predicted_perm).unwrap();
        assert_eq!(report, permuted);
    }

    #[test]
    fn macro_f_between_label_extremes() {
        let gold = seqs(&[&["A", "A", "B", "B", "B"]]);
        let predicted = seqs(&[&["A", "B", "B", "B", "A"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        let fs: Vec<f64> = report
            .per_label
            .values()
            .filter(|m| m.gold_count > 0)
            .map(|m| m.f_measure)
            .collect();
        let lo = fs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(report.macro_avg.f_measure >= lo - 1e-12);
        assert!(report.macro_avg.f_measure <= hi + 1e-12);
    }

    #[test]
    fn predicted_only_label_excluded_from_macro() {
        let gold = seqs(&[&["A", "A"]]);
        let predicted = seqs(&[&["A", "Z"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        // Z appears in per-label with zero scores but not in the macro mean
        assert!(report.per_label.contains_key("Z"));
        assert_eq!(report.per_label["Z"].f_measure, 0.0);
        assert_eq!(report.macro_avg.precision, 1.0);
        assert_eq!(report.macro_avg.recall, 0.5);
    }

    #[test]
    fn shape_mismatch_errors() {
        let gold = seqs(&[&["A"]]);
        let two = seqs(&[&["A"], &["B"]]);
        assert_eq!(
            evaluate(&gold, &two),
            Err(EvalError::SequenceCount { gold: 1, predicted: 2 })
        );
        let ragged = seqs(&[&["A", "B"]]);
        assert_eq!(
            evaluate(&gold, &ragged),
            Err(EvalError::SequenceLength { index: 0, gold: 1, predicted: 2 })
        );
    }

    #[test]
    fn report_text_has_table_and_block() {
        let gold = seqs(&[&["A", "A", "B", "B"]]);
        let predicted = seqs(&[&["A", "B", "B", "B"]]);
        let report = evaluate(&gold, &predicted).unwrap();
        let text = report.to_text();
        assert!(text.contains("macro-average"));
        assert!(text.contains("accuracy=0.75"));
        assert!(text.contains("label.A.precision=1"));
        // table shows two-decimal percentages
        assert!(text.contains("75.00"));
    }
}
