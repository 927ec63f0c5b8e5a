use std::fmt::Write as _;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_pairs(labels: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(labels);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Examples whose true class is `c`.
    pub fn support(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    /// `None` when nothing was predicted as `c`.
    pub fn precision(&self, c: usize) -> Option<f64> {
        let predicted: usize = self.counts.iter().map(|row| row[c]).sum();
        (predicted > 0).then(|| self.counts[c][c] as f64 / predicted as f64)
    }

    /// `None` when `c` never occurs.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let support = self.support(c);
        (support > 0).then(|| self.counts[c][c] as f64 / support as f64)
    }

    /// Accuracy, a per-class precision/recall table and the matrix itself,
    /// column-aligned.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let name_w = self.labels.iter().map(String::len).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "accuracy {:.4} ({}/{})", self.accuracy(), self.correct(), self.total());
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<name_w$}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "support");
        for (c, name) in self.labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>9}  {:>9}  {:>7}",
                name,
                fmt_opt(self.precision(c)),
                fmt_opt(self.recall(c)),
                self.support(c)
            );
        }
        let _ = writeln!(out);
        let cell_w = self
            .counts
            .iter()
            .flatten()
            .map(|v| v.to_string().len())
            .max()
            .unwrap_or(1)
            .max(3);
        let row_w = self
            .labels
            .iter()
            .enumerate()
            .map(|(c, l)| format!("{c} {l}").len())
            .max()
            .unwrap_or(0)
            .max("true\\pred".len());
        let _ = write!(out, "{:<row_w$}", "true\\pred");
        for c in 0..self.labels.len() {
            let _ = write!(out, "  {:>cell_w$}", c);
        }
        out.push('\n');
        for (c, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:<row_w$}", format!("{c} {}", self.labels[c]));
            for v in row {
                let _ = write!(out, "  {v:>cell_w$}");
            }
            out.push('\n');
        }
        out
    }

    /// Header row of predicted labels, then one row per true label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_rates() {
        let m = ConfusionMatrix::from_pairs(vec!["a".into(), "b".into(), "c".into()], &[0, 0, 1, 1], &[0, 1, 1, 1]);
        assert_eq!(m.accuracy(), 0.75);
        assert_eq!(m.precision(1), Some(2.0 / 3.0));
        assert_eq!(m.recall(0), Some(0.5));
        assert_eq!(m.recall(2), None);
        assert_eq!(m.precision(2), None);
        assert!(m.to_text().starts_with("accuracy 0.7500 (3/4)"));
        assert_eq!(m.to_csv().lines().nth(1), Some("a,1,1,0"));
    }

    #[test]
    fn matrix_rows_line_up() {
        let names = vec!["walking".into(), "idle".into(), "fall".into()];
        let m = ConfusionMatrix::from_pairs(names, &[0, 1, 2, 2], &[0, 1, 2, 0]);
        let text = m.to_text();
        let block: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("true")).collect();
        assert_eq!(block.len(), 4);
        assert!(block.iter().all(|l| l.len() == block[0].len()), "{text}");
    }
}
