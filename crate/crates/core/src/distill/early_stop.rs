//! Loss-window early stopping: a step "violates" when its loss exceeds the
//! mean of the previous `window` losses; training stops once the violation
//! count passes the budget.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCount {
    /// Violations accumulate over the whole run.
    #[default]
    Cumulative,
    /// A non-violating step resets the count.
    Consecutive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    window: usize,
    max_violations: usize,
    count: ViolationCount,
    losses: VecDeque<f64>,
    violations: usize,
}

impl EarlyStop {
    pub fn new(window: usize, max_violations: usize, count: ViolationCount) -> Self {
        Self {
            window: window.max(1),
            max_violations,
            count,
            losses: VecDeque::with_capacity(window.max(1)),
            violations: 0,
        }
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    pub fn window_len(&self) -> usize {
        self.losses.len()
    }

    /// Compares `loss` against the current window, then pushes it.
    pub fn update(&mut self, loss: f64) -> Result<StopSignal> {
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss}")));
        }
        if self.losses.len() == self.window {
            let mean = self.losses.iter().sum::<f64>() / self.window as f64;
            if loss > mean {
                self.violations += 1;
            } else if self.count == ViolationCount::Consecutive {
                self.violations = 0;
            }
            self.losses.pop_front();
        }
        self.losses.push_back(loss);
        Ok(if self.violations > self.max_violations {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[f64], window: usize, max: usize, count: ViolationCount) -> (Option<usize>, Vec<usize>) {
        let mut es = EarlyStop::new(window, max, count);
        let mut counts = Vec::new();
        for (i, &l) in seq.iter().enumerate() {
            let s = es.update(l).unwrap();
            counts.push(es.violations());
            if s == StopSignal::Stop {
                return (Some(i + 1), counts);
            }
        }
        (None, counts)
    }

    #[test]
    fn hand_simulated_sequence() {
        let (stop, counts) = run(&[1.0, 1.0, 1.0, 2.0, 2.0, 2.0], 3, 2, ViolationCount::Cumulative);
        assert_eq!(stop, Some(6));
        assert_eq!(&counts[3..], &[1, 2, 3]);
    }

    #[test]
    fn no_violations_before_window_fills() {
        let (stop, counts) = run(&[1.0, 5.0, 9.0], 3, 0, ViolationCount::Cumulative);
        assert_eq!(stop, None);
        assert_eq!(counts, vec![0, 0, 0]);
    }

    #[test]
    fn consecutive_mode_resets() {
        let seq = [1.0, 1.0, 1.0, 2.0, 0.0, 2.0, 0.0, 3.0];
        assert_eq!(run(&seq, 3, 1, ViolationCount::Consecutive).0, None);
        assert_eq!(run(&seq, 3, 1, ViolationCount::Cumulative).0, Some(6));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut es = EarlyStop::new(3, 1, ViolationCount::Cumulative);
        assert!(es.update(f64::NAN).is_err());
    }
}
