//! Stationary double-ended queue at a launchpad.
//!
//! The state `n` counts idle drones when positive and waiting orders when
//! negative. Orders queue up to the capacity `M`; arrivals finding `M` orders
//! waiting are lost. `gamma` is the drone-to-order rate ratio.

use serde::{Deserialize, Serialize};

use crate::DomainError;

fn check_gamma(gamma: f64) -> Result<(), DomainError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(DomainError::new(format!(
            "reliability level must lie in [0, 1), got {gamma}"
        )));
    }
    Ok(())
}

fn check_capacity(capacity: u32) -> Result<(), DomainError> {
    if capacity == 0 {
        return Err(DomainError::new("queue capacity must be at least 1"));
    }
    Ok(())
}

/// Truncated stationary distribution over `n = -M..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub capacity: u32,
    /// `probs[k]` is the probability of state `n = k - M`.
    pub probs: Vec<f64>,
    /// Mass of all states above `n_max`.
    pub tail: f64,
}

impl StationaryDistribution {
    pub fn prob(&self, n: i64) -> f64 {
        let k = n + self.capacity as i64;
        if k < 0 {
            return 0.0;
        }
        self.probs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn states(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let m = self.capacity as i64;
        self.probs.iter().enumerate().map(move |(k, &p)| (k as i64 - m, p))
    }
}

pub fn stationary_distribution(
    gamma: f64,
    capacity: u32,
    n_max: i64,
) -> Result<StationaryDistribution, DomainError> {
    check_gamma(gamma)?;
    check_capacity(capacity)?;
    let m = capacity as i64;
    if n_max < -m {
        return Err(DomainError::new("n_max below the lowest state"));
    }
    let probs: Vec<f64> = (-m..=n_max)
        .map(|n| (1.0 - gamma) * gamma.powi((m + n) as i32))
        .collect();
    // Geometric tail beyond n_max.
    let tail = gamma.powi((m + n_max + 1) as i32);
    Ok(StationaryDistribution {
        capacity,
        probs,
        tail,
    })
}

/// Mean launchpad waiting time, or [`LaunchpadWait::NoService`] when no order
/// is ever served.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LaunchpadWait {
    Minutes(f64),
    NoService,
}

impl LaunchpadWait {
    pub fn minutes(self) -> Option<f64> {
        match self {
            LaunchpadWait::Minutes(m) => Some(m),
            LaunchpadWait::NoService => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchpadQueueMetrics {
    pub gamma: f64,
    pub capacity: u32,
    /// Mean idle drones.
    pub n_drones: f64,
    /// Mean waiting orders.
    pub n_orders: f64,
    /// Probability an arriving order finds the queue full.
    pub p_block: f64,
    pub wait: Option<LaunchpadWait>,
}

impl LaunchpadQueueMetrics {
    /// Metrics of a launchpad that is not operating. All counts are zero so
    /// that unbuilt sites contribute nothing.
    pub fn inactive(capacity: u32) -> Self {
        LaunchpadQueueMetrics {
            gamma: 0.0,
            capacity,
            n_drones: 0.0,
            n_orders: 0.0,
            p_block: 1.0,
            wait: Some(LaunchpadWait::NoService),
        }
    }

    pub fn with_wait(mut self, throughput: f64) -> Self {
        self.wait = Some(launchpad_wait(self.n_orders, throughput));
        self
    }
}

/// Mean idle drones at reliability `gamma`.
pub fn mean_drones(gamma: f64, capacity: u32) -> f64 {
    gamma.powi(capacity as i32 + 1) / (1.0 - gamma)
}

/// Mean waiting orders at reliability `gamma`.
pub fn mean_orders(gamma: f64, capacity: u32) -> f64 {
    capacity as f64 - gamma * (1.0 - gamma.powi(capacity as i32)) / (1.0 - gamma)
}

pub fn queue_metrics(gamma: f64, capacity: u32) -> Result<LaunchpadQueueMetrics, DomainError> {
    check_gamma(gamma)?;
    check_capacity(capacity)?;
    Ok(LaunchpadQueueMetrics {
        gamma,
        capacity,
        n_drones: mean_drones(gamma, capacity),
        n_orders: mean_orders(gamma, capacity),
        p_block: 1.0 - gamma,
        wait: None,
    })
}

/// Order flow that joins the queue.
pub fn realized_rate(lambda_hat: f64, gamma: f64) -> f64 {
    lambda_hat * gamma
}

pub fn launchpad_wait(n_orders: f64, throughput: f64) -> LaunchpadWait {
    if throughput > 0.0 {
        LaunchpadWait::Minutes(n_orders / throughput)
    } else {
        LaunchpadWait::NoService
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Means by direct summation of the truncated distribution.
    fn summed_means(gamma: f64, m: u32) -> (f64, f64, f64) {
        let d = stationary_distribution(gamma, m, 2000).unwrap();
        let mut drones = 0.0;
        let mut orders = 0.0;
        for (n, p) in d.states() {
            if n > 0 {
                drones += n as f64 * p;
            } else {
                orders += (-n) as f64 * p;
            }
        }
        (drones, orders, d.tail)
    }

    #[test]
    fn zero_gamma_is_saturated() {
        let d = stationary_distribution(0.0, 4, 10).unwrap();
        assert_eq!(d.prob(-4), 1.0);
        assert!(d.states().skip(1).all(|(_, p)| p == 0.0));
        for m in [1, 3, 7] {
            let q = queue_metrics(0.0, m).unwrap();
            assert_eq!((q.n_drones, q.n_orders, q.p_block), (0.0, m as f64, 1.0));
        }
    }

    #[test]
    fn geometric_values() {
        let d = stationary_distribution(0.5, 1, 5).unwrap();
        assert_eq!(d.prob(-1), 0.5);
        assert_eq!(d.prob(0), 0.25);
        assert_eq!(d.prob(1), 0.125);
        assert_eq!(d.prob(-2), 0.0);
    }

    #[test]
    fn closed_forms_match_summation() {
        let q = queue_metrics(0.5, 1).unwrap();
        let (nd, no, _) = summed_means(0.5, 1);
        assert_abs_diff_eq!(q.n_drones, nd, epsilon = 1e-12);
        assert_abs_diff_eq!(q.n_orders, no, epsilon = 1e-12);
        assert_abs_diff_eq!(nd, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(no, 0.5, epsilon = 1e-12);
        assert_eq!(q.p_block, 0.5);

        for g in 1..=9 {
            let gamma = g as f64 / 10.0;
            for m in [1, 3, 5, 20] {
                let q = queue_metrics(gamma, m).unwrap();
                let (nd, no, tail) = summed_means(gamma, m);
                assert!(tail < 1e-15);
                assert_abs_diff_eq!(q.n_drones, nd, epsilon = 1e-12);
                assert_abs_diff_eq!(q.n_orders, no, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normalization_with_tail() {
        for &(gamma, m, n_max) in &[(0.3, 2, 0), (0.9, 5, 10), (0.99, 1, 50), (0.0, 3, -3)] {
            let d = stationary_distribution(gamma, m, n_max).unwrap();
            let total: f64 = d.probs.iter().sum::<f64>() + d.tail;
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_out_of_range_is_rejected() {
        assert!(stationary_distribution(1.0, 1, 3).is_err());
        assert!(queue_metrics(1.0, 3).is_err());
        assert!(queue_metrics(-0.1, 3).is_err());
        assert!(queue_metrics(0.5, 0).is_err());
    }

    #[test]
    fn thinning_and_wait() {
        assert_abs_diff_eq!(realized_rate(1.0, 0.8), 0.8);
        assert_eq!(realized_rate(7.0, 0.0), 0.0);
        assert_abs_diff_eq!(realized_rate(2.5, 0.4), 1.0);
        assert_eq!(launchpad_wait(0.5, 0.25), LaunchpadWait::Minutes(2.0));
        assert_eq!(launchpad_wait(0.5, 0.0), LaunchpadWait::NoService);
        let q = queue_metrics(0.5, 1).unwrap().with_wait(realized_rate(1.0, 0.5));
        assert_eq!(q.wait, Some(LaunchpadWait::Minutes(1.0)));
    }

    #[test]
    fn inactive_launchpad_counts_nothing() {
        let q = LaunchpadQueueMetrics::inactive(5);
        assert_eq!((q.n_drones, q.n_orders), (0.0, 0.0));
        assert_eq!(q.wait, Some(LaunchpadWait::NoService));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn metrics_within_bounds(gamma in 0.0f64..0.999, m in 1u32..40) {
                let q = queue_metrics(gamma, m).unwrap();
                prop_assert!(q.n_drones >= 0.0);
                prop_assert!(q.n_orders >= -1e-12 && q.n_orders <= m as f64 + 1e-12);
                prop_assert_eq!(q.p_block, 1.0 - gamma);
            }
        }
    }
}
