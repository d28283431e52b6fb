use std::fmt::Write as _;

/// One completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Negative ELBO.
    pub train_loss: f64,
    pub nll: f64,
    pub kl_nu: f64,
    pub kl_z: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    /// Mean sampled `π_l`; empty for baselines.
    pub mean_pi: Vec<f64>,
    /// Most frequent sampled scope (ties go to the smaller scope).
    pub lns_mode: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    truncation: usize,
    records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn new(truncation: usize) -> Self {
        TrainHistory {
            truncation,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// `epoch,train_loss,val_acc,val_loss,pi_1..pi_T,lns_mode`. Baseline
    /// runs leave the π columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_acc,val_loss");
        for l in 1..=self.truncation {
            let _ = write!(out, ",pi_{l}");
        }
        out.push_str(",lns_mode\n");
        for r in &self.records {
            let _ = write!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_acc, r.val_loss);
            for l in 0..self.truncation {
                match r.mean_pi.get(l) {
                    Some(p) => {
                        let _ = write!(out, ",{p}");
                    }
                    None => out.push(','),
                }
            }
            let _ = writeln!(out, ",{}", r.lns_mode);
        }
        out
    }

    /// Trailing moving average of the training loss with window `w`.
    pub fn loss_moving_average(&self, w: usize) -> Vec<f64> {
        let losses: Vec<f64> = self.records.iter().map(|r| r.train_loss).collect();
        losses
            .windows(w.max(1))
            .map(|win| win.iter().sum::<f64>() / win.len() as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, loss: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: loss,
            nll: loss,
            kl_nu: 0.0,
            kl_z: 0.0,
            val_acc: 0.5,
            val_loss: 0.7,
            mean_pi: vec![0.9, 0.4],
            lns_mode: 2,
        }
    }

    #[test]
    fn csv_layout() {
        let mut h = TrainHistory::new(2);
        h.push(rec(1, 1.5));
        let csv = h.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,train_loss,val_acc,val_loss,pi_1,pi_2,lns_mode"));
        assert_eq!(lines.next(), Some("1,1.5,0.5,0.7,0.9,0.4,2"));
    }

    #[test]
    fn moving_average() {
        let mut h = TrainHistory::new(2);
        for (i, l) in [4.0, 2.0, 3.0, 1.0].into_iter().enumerate() {
            h.push(rec(i + 1, l));
        }
        assert_eq!(h.loss_moving_average(2), vec![3.0, 2.5, 2.0]);
    }
}
