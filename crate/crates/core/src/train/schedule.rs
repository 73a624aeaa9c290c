use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Linear warmup from zero to `peak_lr`, then cosine annealing down to `floor_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub floor_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            total_epochs: 200,
            warmup_epochs: 5,
            peak_lr: 0.1,
            floor_lr: 0.0,
        }
    }
}

impl ScheduleConfig {
    /// Same warmup and peak, shorter run. The warmup is clipped to leave at least one
    /// annealing epoch.
    pub fn with_epochs(total_epochs: usize) -> Self {
        let d = Self::default();
        Self {
            total_epochs,
            warmup_epochs: d.warmup_epochs.min(total_epochs.saturating_sub(1)),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) {
            return Err(config_err(format!(
                "peak learning rate must be positive, got {}",
                self.peak_lr
            )));
        }
        if self.total_epochs > 0 && self.warmup_epochs >= self.total_epochs {
            return Err(config_err(format!(
                "warmup ({}) must be shorter than training ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        Ok(())
    }

    /// Learning rate at a fractional epoch position.
    pub fn lr_at(&self, progress: f64) -> f64 {
        let warm = self.warmup_epochs as f64;
        if progress < warm {
            return self.peak_lr * progress / warm;
        }
        let span = self.total_epochs as f64 - warm;
        if span <= 0.0 {
            return self.peak_lr;
        }
        let t = ((progress - warm) / span).clamp(0.0, 1.0);
        self.floor_lr + (self.peak_lr - self.floor_lr) * 0.5 * (1.0 + (PI * t).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn endpoints_and_midpoints() {
        let s = ScheduleConfig::default();
        assert_eq!(s.lr_at(0.0), 0.0);
        assert!(close(s.lr_at(5.0), 0.1));
        assert!(close(s.lr_at(2.5), 0.05));
        assert!(close(s.lr_at(102.5), 0.05));
        assert!(close(s.lr_at(200.0), 0.0));
    }

    #[test]
    fn continuous_at_warmup_end_and_nonincreasing_after() {
        let s = ScheduleConfig::default();
        assert!((s.lr_at(5.0 - 1e-9) - s.lr_at(5.0)).abs() < 1e-9);
        let mut prev = s.lr_at(5.0);
        for i in 1..=1950 {
            let lr = s.lr_at(5.0 + i as f64 * 0.1);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn short_runs() {
        assert_eq!(ScheduleConfig::with_epochs(50).warmup_epochs, 5);
        assert_eq!(ScheduleConfig::with_epochs(3).warmup_epochs, 2);
        assert!(ScheduleConfig::with_epochs(3).validate().is_ok());
        let bad = ScheduleConfig {
            warmup_epochs: 10,
            total_epochs: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
