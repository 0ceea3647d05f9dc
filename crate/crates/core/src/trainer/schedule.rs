/// Learning-rate reduction when a maximized metric stops improving.
///
/// An epoch counts as bad unless its metric strictly exceeds the best seen.
/// Once `patience` consecutive bad epochs accumulate, the rate is multiplied
/// by `factor` and the count restarts.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's metric and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        let improved = match self.best {
            None => !metric.is_nan(),
            Some(b) => metric > b,
        };
        if improved {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

/// One annealing step of the entropy weight: `max(min, λ·decay)`.
pub fn anneal_lambda(lambda: f64, decay: f64, min: f64) -> f64 {
    (lambda * decay).max(min)
}

/// Entropy weight used during epoch `k` (0-based): `init` annealed `k` times.
pub fn lambda_at(init: f64, decay: f64, min: f64, k: usize) -> f64 {
    (0..k).fold(init, |l, _| anneal_lambda(l, decay, min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_metric_reduces_after_patience_epochs() {
        let mut s = PlateauScheduler::new(0.5, 10);
        let mut lr = 1e-3;
        let mut changed_at = None;
        for epoch in 1..=30 {
            let next = s.observe(0.3, lr);
            if next != lr && changed_at.is_none() {
                changed_at = Some(epoch);
            }
            lr = next;
        }
        assert_eq!(changed_at, Some(11));
        assert_eq!(lr, 1e-3 * 0.25);
    }

    #[test]
    fn improving_metric_keeps_rate() {
        let mut s = PlateauScheduler::new(0.5, 10);
        let mut lr = 1e-3;
        for e in 0..200 {
            lr = s.observe(e as f64, lr);
        }
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn lambda_schedule_first_step_and_floor() {
        assert_eq!(anneal_lambda(0.01, 0.95, 0.001), 0.01 * 0.95);
        assert_eq!(anneal_lambda(0.001, 0.95, 0.001), 0.001);
        assert_eq!(lambda_at(0.01, 0.95, 0.001, 0), 0.01);
        assert_eq!(lambda_at(0.01, 0.95, 0.001, 200), 0.001);
    }
}
