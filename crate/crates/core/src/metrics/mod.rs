//! Accuracy, expected calibration error, predictive entropy and PAvsPU.
//!
//! Every function takes class probabilities (N×C), the evaluated node ids
//! and their labels in the same order.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_BINS: usize = 10;
pub const CURVE_POINTS: usize = 20;

fn check(probs: &Matrix, nodes: &[usize], labels: &[usize]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Precondition("metric over an empty node mask".into()));
    }
    if nodes.len() != labels.len() {
        return Err(Error::Precondition(format!("{} nodes but {} labels", nodes.len(), labels.len())));
    }
    for &n in nodes {
        if n >= probs.rows() {
            return Err(Error::Precondition(format!("node {n} outside [0, {})", probs.rows())));
        }
        let s: f64 = probs.row(n).iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("probabilities of node {n} sum to {s}")));
        }
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(probs: &Matrix, nodes: &[usize], labels: &[usize]) -> Result<f64> {
    check(probs, nodes, labels)?;
    let hits = nodes.iter().zip(labels).filter(|(&n, &y)| argmax(probs.row(n)) == y).count();
    Ok(hits as f64 / nodes.len() as f64)
}

/// Mean negative log-probability of the true class, floored at 1e-12.
pub fn log_loss(probs: &Matrix, nodes: &[usize], labels: &[usize]) -> Result<f64> {
    check(probs, nodes, labels)?;
    let total: f64 = nodes.iter().zip(labels).map(|(&n, &y)| -probs[(n, y)].max(1e-12).ln()).sum();
    Ok(total / nodes.len() as f64)
}

/// Occupancy of one confidence bin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BinStat {
    pub count: usize,
    /// Mean correctness; 0 for an empty bin.
    pub accuracy: f64,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
}

/// Bin of a confidence among `n_bins` right-closed bins over [0, 1]; a
/// confidence of exactly 0 falls in the first bin.
pub fn bin_index(confidence: f64, n_bins: usize) -> usize {
    let b = (confidence * n_bins as f64).ceil() as isize - 1;
    b.clamp(0, n_bins as isize - 1) as usize
}

pub fn calibration_bins(probs: &Matrix, nodes: &[usize], labels: &[usize], n_bins: usize) -> Result<Vec<BinStat>> {
    if n_bins == 0 {
        return Err(Error::Precondition("n_bins must be at least 1".into()));
    }
    check(probs, nodes, labels)?;
    let mut bins = vec![BinStat::default(); n_bins];
    for (&n, &y) in nodes.iter().zip(labels) {
        let row = probs.row(n);
        let pred = argmax(row);
        let conf = row[pred];
        let b = &mut bins[bin_index(conf, n_bins)];
        b.count += 1;
        b.accuracy += f64::from(u8::from(pred == y));
        b.confidence += conf;
    }
    for b in &mut bins {
        if b.count > 0 {
            b.accuracy /= b.count as f64;
            b.confidence /= b.count as f64;
        }
    }
    Ok(bins)
}

/// `Σ_i |B_i|/N · |acc(B_i) − conf(B_i)|`.
pub fn ece(probs: &Matrix, nodes: &[usize], labels: &[usize], n_bins: usize) -> Result<f64> {
    let bins = calibration_bins(probs, nodes, labels, n_bins)?;
    Ok(ece_from_bins(&bins, nodes.len()))
}

fn ece_from_bins(bins: &[BinStat], total: usize) -> f64 {
    bins.iter()
        .map(|b| b.count as f64 / total as f64 * (b.accuracy - b.confidence).abs())
        .sum()
}

/// Natural-log entropy of each row, with `0 ln 0 = 0`.
pub fn predictive_entropy(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| -probs.row(r).iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
        .collect()
}

/// Quadrant counts behind PAvsPU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Quadrants {
    pub accurate_certain: usize,
    pub accurate_uncertain: usize,
    pub inaccurate_certain: usize,
    pub inaccurate_uncertain: usize,
}

impl Quadrants {
    pub fn ratio(&self) -> f64 {
        let good = self.accurate_certain + self.inaccurate_uncertain;
        let total = good + self.accurate_uncertain + self.inaccurate_certain;
        good as f64 / total as f64
    }
}

fn quadrants(probs: &Matrix, entropy: &[f64], nodes: &[usize], labels: &[usize], threshold: f64) -> Quadrants {
    let mut q = Quadrants::default();
    for (&n, &y) in nodes.iter().zip(labels) {
        let accurate = argmax(probs.row(n)) == y;
        let certain = entropy[n] < threshold;
        match (accurate, certain) {
            (true, true) => q.accurate_certain += 1,
            (true, false) => q.accurate_uncertain += 1,
            (false, true) => q.inaccurate_certain += 1,
            (false, false) => q.inaccurate_uncertain += 1,
        }
    }
    q
}

/// A node is certain when its entropy is strictly below `threshold`.
pub fn pavspu_counts(probs: &Matrix, nodes: &[usize], labels: &[usize], threshold: f64) -> Result<Quadrants> {
    if !(threshold >= 0.0) {
        return Err(Error::Precondition(format!("uncertainty threshold {threshold} is negative")));
    }
    check(probs, nodes, labels)?;
    Ok(quadrants(probs, &predictive_entropy(probs), nodes, labels, threshold))
}

pub fn pavspu(probs: &Matrix, nodes: &[usize], labels: &[usize], threshold: f64) -> Result<f64> {
    Ok(pavspu_counts(probs, nodes, labels, threshold)?.ratio())
}

/// PAvsPU at `points` evenly spaced thresholds over `[0, ln C]`, returned as
/// `(threshold / ln C, value)` pairs.
pub fn pavspu_curve(probs: &Matrix, nodes: &[usize], labels: &[usize], points: usize) -> Result<Vec<(f64, f64)>> {
    check(probs, nodes, labels)?;
    let max_h = (probs.cols() as f64).ln();
    let entropy = predictive_entropy(probs);
    Ok((0..points)
        .map(|k| {
            let frac = if points > 1 { k as f64 / (points - 1) as f64 } else { 0.0 };
            (frac, quadrants(probs, &entropy, nodes, labels, frac * max_h).ratio())
        })
        .collect())
}

/// Everything the calibration study reports for one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<BinStat>,
    pub pavspu_curve: Vec<(f64, f64)>,
    /// Entropy of every node, evaluated or not.
    pub entropy: Vec<f64>,
}

impl CalibrationReport {
    pub fn build(probs: &Matrix, nodes: &[usize], labels: &[usize], n_bins: usize) -> Result<Self> {
        let bins = calibration_bins(probs, nodes, labels, n_bins)?;
        Ok(CalibrationReport {
            accuracy: accuracy(probs, nodes, labels)?,
            ece: ece_from_bins(&bins, nodes.len()),
            bins,
            pavspu_curve: pavspu_curve(probs, nodes, labels, CURVE_POINTS)?,
            entropy: predictive_entropy(probs),
        })
    }

    /// Mean PAvsPU over the threshold curve.
    pub fn mean_pavspu(&self) -> f64 {
        self.pavspu_curve.iter().map(|p| p.1).sum::<f64>() / self.pavspu_curve.len().max(1) as f64
    }

    pub fn bins_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,count,accuracy,confidence\n");
        let n = self.bins.len() as f64;
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                i as f64 / n,
                (i + 1) as f64 / n,
                b.count,
                b.accuracy,
                b.confidence
            );
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold_fraction,pavspu\n");
        for (t, v) in &self.pavspu_curve {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::substream;

    /// Probabilities whose argmax is `pred` with confidence `conf` over two
    /// classes.
    fn two_class(rows: &[(usize, f64)]) -> Matrix {
        let data: Vec<[f64; 2]> = rows
            .iter()
            .map(|&(pred, conf)| if pred == 0 { [conf, 1.0 - conf] } else { [1.0 - conf, conf] })
            .collect();
        Matrix::from_rows(&data)
    }

    #[test]
    fn accuracy_examples() {
        let p = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]);
        assert_eq!(accuracy(&p, &[0, 1], &[0, 1]).unwrap(), 1.0);
        let u = Matrix::filled(3, 4, 0.25);
        assert_eq!(accuracy(&u, &[0, 1, 2], &[0, 0, 0]).unwrap(), 1.0);
        assert!(accuracy(&u, &[], &[]).is_err());
        assert!(accuracy(&Matrix::filled(1, 2, 0.7), &[0], &[0]).is_err());
    }

    #[test]
    fn accuracy_matches_hand_count() {
        let mut rng = substream(51, &[]);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut hits = 0;
        for _ in 0..10 {
            let mut r: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            let y = rng.gen_range(0..3);
            let best = (0..3).max_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap()).unwrap();
            hits += usize::from(best == y);
            rows.push(r);
            labels.push(y);
        }
        let p = Matrix::from_rows(&rows);
        let nodes: Vec<usize> = (0..10).collect();
        assert_eq!(accuracy(&p, &nodes, &labels).unwrap(), hits as f64 / 10.0);
    }

    #[test]
    fn ece_examples() {
        let p = two_class(&[(0, 0.9), (0, 0.8), (0, 0.6), (0, 0.55)]);
        let labels = [0, 0, 1, 0];
        let e = ece(&p, &[0, 1, 2, 3], &labels, 2).unwrap();
        assert!((e - 0.0375).abs() < 1e-12, "{e}");
        let bins = calibration_bins(&p, &[0, 1, 2, 3], &labels, 2).unwrap();
        assert_eq!(bins[0].count, 0);
        assert_eq!(bins[1].count, 4);

        let sure = two_class(&[(0, 1.0), (1, 1.0)]);
        assert_eq!(ece(&sure, &[0, 1], &[0, 1], 10).unwrap(), 0.0);

        let e2 = ece(&p, &[3, 1, 0, 2], &[0, 0, 0, 1], 2).unwrap();
        assert!((e - e2).abs() < 1e-15);
    }

    #[test]
    fn single_bin_ece_is_gap() {
        let mut rng = substream(52, &[]);
        let rows: Vec<(usize, f64)> = (0..30).map(|_| (rng.gen_range(0..2), rng.gen_range(0.5..1.0))).collect();
        let labels: Vec<usize> = (0..30).map(|_| rng.gen_range(0..2)).collect();
        let p = two_class(&rows);
        let nodes: Vec<usize> = (0..30).collect();
        let acc = accuracy(&p, &nodes, &labels).unwrap();
        let conf = rows.iter().map(|r| r.1).sum::<f64>() / 30.0;
        assert!((ece(&p, &nodes, &labels, 1).unwrap() - (acc - conf).abs()).abs() < 1e-12);
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.5, 2), 0);
    }

    #[test]
    fn entropy_examples() {
        let p = Matrix::from_rows(&[[1.0, 0.0, 0.0], [1.0 / 3.0; 3], [0.5, 0.25, 0.25]]);
        let h = predictive_entropy(&p);
        assert_eq!(h[0], 0.0);
        assert!((h[1] - 3f64.ln()).abs() < 1e-12);
        assert!((h[2] - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((h[2] - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn pavspu_extremes() {
        let p = two_class(&[(0, 0.9), (1, 0.6), (0, 0.7), (1, 0.99)]);
        let nodes = [0, 1, 2, 3];
        let labels = [0, 0, 0, 1];
        let acc = accuracy(&p, &nodes, &labels).unwrap();
        assert_eq!(pavspu(&p, &nodes, &labels, 0.0).unwrap(), 1.0 - acc);
        assert_eq!(pavspu(&p, &nodes, &labels, 2f64.ln() + 0.1).unwrap(), acc);
        assert!(pavspu(&p, &[], &[], 0.5).is_err());
    }

    #[test]
    fn pavspu_mixed_quadrants() {
        // Entropies: nodes 0 and 3 are confident (< 0.3), the rest are not.
        let p = two_class(&[(0, 0.97), (0, 0.6), (1, 0.55), (1, 0.95), (0, 0.7), (1, 0.65)]);
        let labels = [0, 0, 0, 0, 1, 1];
        // 0: accurate certain; 1: accurate uncertain; 2: inaccurate uncertain;
        // 3: inaccurate certain; 4: inaccurate uncertain; 5: accurate uncertain.
        let q = pavspu_counts(&p, &[0, 1, 2, 3, 4, 5], &labels, 0.3).unwrap();
        assert_eq!(
            q,
            Quadrants {
                accurate_certain: 1,
                accurate_uncertain: 2,
                inaccurate_certain: 1,
                inaccurate_uncertain: 2,
            }
        );
        assert!((q.ratio() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn report_consistency() {
        let p = two_class(&[(0, 0.9), (1, 0.6), (0, 0.7), (1, 0.99), (0, 0.51)]);
        let nodes = [0, 1, 2, 3, 4];
        let labels = [0, 0, 0, 1, 1];
        let r = CalibrationReport::build(&p, &nodes, &labels, 10).unwrap();
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(r.pavspu_curve.len(), CURVE_POINTS);
        assert_eq!(r.pavspu_curve[0].1, 1.0 - r.accuracy);
        assert!((0.0..=1.0).contains(&r.ece));
        assert_eq!(r.bins_csv().lines().count(), 11);
        assert_eq!(r, CalibrationReport::build(&p, &nodes, &labels, 10).unwrap());
    }
}
