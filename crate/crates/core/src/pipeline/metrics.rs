//! Confusion matrices and accuracy reporting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::PipelineError;

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self, PipelineError> {
        if truth.len() != predicted.len() {
            return Err(PipelineError::Data(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), PipelineError> {
        let c = self.classes();
        if truth >= c || predicted >= c {
            return Err(PipelineError::Data(format!(
                "class pair ({truth}, {predicted}) outside a {c}-class matrix"
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header: Vec<String> = (0..self.classes()).map(|c| format!("pred_{c}")).collect();
        writeln!(w, "true,{}", header.join(","))?;
        for (t, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(w, "{t},{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap with row-normalized shading and raw counts in each cell.
    pub fn to_svg(&self, title: &str) -> String {
        let c = self.classes();
        let cell = 56.0;
        let (left, top) = (70.0, 60.0);
        let size = cell * c as f64;
        let (w, h) = (left + size + 20.0, top + size + 50.0);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            w / 2.0,
            title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
        );
        for (t, row) in self.counts.iter().enumerate() {
            let row_total = row.iter().sum::<u64>().max(1) as f64;
            for (p, &n) in row.iter().enumerate() {
                let frac = n as f64 / row_total;
                let shade = (255.0 * (1.0 - frac)).round() as u8;
                let (x, y) = (left + cell * p as f64, top + cell * t as f64);
                s.push_str(&format!(
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#888\"/>\n\
                     <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" fill=\"{}\">{n}</text>\n",
                    x + cell / 2.0,
                    y + cell / 2.0 + 5.0,
                    if frac > 0.5 { "white" } else { "black" }
                ));
            }
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{t}</text>\n",
                left - 8.0,
                top + cell * t as f64 + cell / 2.0 + 4.0
            ));
        }
        for p in 0..c {
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{p}</text>\n",
                left + cell * p as f64 + cell / 2.0,
                top + size + 18.0
            ));
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">predicted</text>\n\
             <text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">true</text>\n</svg>\n",
            left + size / 2.0,
            top + size + 40.0,
            top + size / 2.0,
            top + size / 2.0
        ));
        s
    }
}

/// Accuracy at the two-decimal precision used in reports.
pub fn format_accuracy(accuracy: f64) -> String {
    format!("{accuracy:.2}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn perfect_predictor_is_diagonal() {
        let y: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let m = ConfusionMatrix::from_predictions(6, &y, &y).unwrap();
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.total(), 60);
        for (t, row) in m.counts().iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                assert_eq!(n == 0, t != p);
            }
        }
    }

    #[test]
    fn uniform_random_predictor_scores_about_one_sixth() {
        let n = 6000;
        let mut rng = crate::seed::rng(42);
        let y: Vec<usize> = (0..n).map(|i| i % 6).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let acc = ConfusionMatrix::from_predictions(6, &y, &p).unwrap().accuracy();
        let sigma = (1.0 / 6.0 * 5.0 / 6.0 / n as f64).sqrt();
        assert!((acc - 1.0 / 6.0).abs() < 3.0 * sigma, "{acc}");
    }

    #[test]
    fn reported_precision_and_outputs() {
        let mut m = ConfusionMatrix::new(6);
        for i in 0..1200 {
            let t = i % 6;
            m.record(t, if i < 1152 { t } else { (t + 1) % 6 }).unwrap();
        }
        assert_eq!(format_accuracy(m.accuracy()), "0.96");
        assert!(m.record(6, 0).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        m.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "true,pred_0,pred_1,pred_2,pred_3,pred_4,pred_5");
        assert_eq!(text.lines().count(), 7);
        let svg = m.to_svg("confusion");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 1 + 36);
    }
}
