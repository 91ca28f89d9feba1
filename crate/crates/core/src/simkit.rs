//! Discrete-event simulators used as ground truth for the analytic modules.
//!
//! Confidence intervals come from non-overlapping batch means after discarding
//! the first 10% of observations as warm-up. Every random process draws from
//! its own ChaCha8 stream derived from the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bundling::{pickup_time_first, ODGroundContext};
use crate::DomainError;

const WARMUP_FRACTION: f64 = 0.1;
const BATCHES: usize = 50;
pub const CONFIDENCE: f64 = 0.99;

/// Point estimate with a batch-means confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Observations behind the estimate, after warm-up.
    pub samples: u64,
    pub batches: u32,
    /// Half-width of the 99% interval; infinite with fewer than two batches.
    pub half_width: f64,
    pub seed: u64,
}

impl SimEstimate {
    /// Whether `value` lies in the interval. The interval is never narrower
    /// than one observation's share of the mean: a state the run never
    /// visits gives zero spread between batches, which is no evidence
    /// against a tiny nonzero value.
    pub fn covers(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width.max(self.resolution())
    }

    /// `1 / samples`, or infinite without samples.
    pub fn resolution(&self) -> f64 {
        1.0 / self.samples as f64
    }

    /// Same estimate with the interval widened to `confidence`.
    pub fn at_confidence(&self, confidence: f64) -> SimEstimate {
        let scale = t_quantile(confidence, self.batches) / t_quantile(CONFIDENCE, self.batches);
        SimEstimate {
            half_width: self.half_width * scale,
            ..*self
        }
    }
}

fn t_quantile(confidence: f64, batches: u32) -> f64 {
    if batches < 2 {
        return f64::INFINITY;
    }
    let dist = StudentsT::new(0.0, 1.0, (batches - 1) as f64).expect("positive degrees of freedom");
    dist.inverse_cdf(0.5 + confidence / 2.0)
}

/// Estimate from per-batch means.
fn from_batches(batch_means: &[f64], samples: u64, seed: u64) -> SimEstimate {
    let b = batch_means.len();
    let mean = batch_means.iter().sum::<f64>() / b.max(1) as f64;
    let half_width = if b < 2 {
        f64::INFINITY
    } else {
        let var = batch_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        t_quantile(CONFIDENCE, b as u32) * (var / b as f64).sqrt()
    };
    SimEstimate {
        mean,
        samples,
        batches: b as u32,
        half_width,
        seed,
    }
}

fn streams(seed: u64, count: u64) -> Vec<ChaCha8Rng> {
    (0..count)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        })
        .collect()
}

/// Exponential sampler that accepts a zero mean.
struct ExpSampler(Option<Exp<f64>>);

impl ExpSampler {
    fn with_mean(mean: f64) -> Self {
        ExpSampler((mean > 0.0).then(|| Exp::new(1.0 / mean).expect("positive rate")))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.0.as_ref().map_or(0.0, |e| e.sample(rng))
    }
}

/// Batch layout over observation indices `0..n`.
struct Batching {
    warmup: u64,
    size: u64,
    count: usize,
}

impl Batching {
    fn new(n: u64) -> Self {
        let warmup = (n as f64 * WARMUP_FRACTION).floor() as u64;
        let usable = n - warmup;
        let count = (usable.min(BATCHES as u64)) as usize;
        let size = if count == 0 { 0 } else { usable / count as u64 };
        Batching { warmup, size, count }
    }

    fn batch(&self, index: u64) -> Option<usize> {
        if index < self.warmup || self.size == 0 {
            return None;
        }
        let b = ((index - self.warmup) / self.size) as usize;
        (b < self.count).then_some(b)
    }

    fn samples(&self) -> u64 {
        self.size * self.count as u64
    }
}

/// Taker state found by an arriving order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seen {
    None,
    S11,
    S21,
    S22,
}

/// Per-order results of the bundling simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundlingSimEstimates {
    pub p_s: SimEstimate,
    pub rho11: SimEstimate,
    pub rho21: SimEstimate,
    pub rho22: SimEstimate,
    pub w_g: SimEstimate,
    pub t_s1: SimEstimate,
    pub t_s2: SimEstimate,
    /// Time-averaged count of couriers carrying or pursuing at least one
    /// order, by Little's law from per-order busy-time shares.
    pub busy_couriers: SimEstimate,
    pub orders_created: u64,
    pub orders_delivered: u64,
}

const N_BUNDLE_STATS: usize = 8;

/// A courier currently accepting orders.
struct Taker {
    /// Order ids and arrival times.
    orders: Vec<(u64, f64)>,
    /// Index of the order whose pickup is in progress.
    picking: usize,
    /// Completion time of that pickup.
    pickup_done: f64,
    /// Completed pickup times.
    pickups: Vec<f64>,
}

struct BundleSim<'a> {
    ctx: &'a ODGroundContext,
    gap_pick: ExpSampler,
    gap_drop: ExpSampler,
    rng_pick: ChaCha8Rng,
    rng_drop: ChaCha8Rng,
    batching: Batching,
    /// Per-batch sums of each per-order statistic.
    sums: Vec<[f64; N_BUNDLE_STATS]>,
    delivered: u64,
}

impl BundleSim<'_> {
    fn record(&mut self, id: u64, stats: [f64; N_BUNDLE_STATS]) {
        self.delivered += 1;
        if let Some(b) = self.batching.batch(id) {
            for (acc, v) in self.sums[b].iter_mut().zip(stats) {
                *acc += v;
            }
        }
    }

    /// Completes the remaining pickups and drop-offs of a closed courier and
    /// records every order on it.
    fn finish(&mut self, mut t: Taker, seen: &[(u64, Seen, bool)]) {
        t.pickups.push(t.pickup_done);
        while t.pickups.len() < t.orders.len() {
            let last = *t.pickups.last().unwrap();
            t.pickups.push(last + self.gap_pick.sample(&mut self.rng_pick));
        }
        let depart = *t.pickups.last().unwrap();
        let mut drops = Vec::with_capacity(t.orders.len());
        drops.push(depart + self.ctx.trip_time);
        while drops.len() < t.orders.len() {
            let last = *drops.last().unwrap();
            drops.push(last + self.gap_drop.sample(&mut self.rng_drop));
        }

        // Sweep the order intervals [arrival, drop] for overlap counts.
        let m = t.orders.len();
        let mut cuts: Vec<f64> = t.orders.iter().map(|o| o.1).chain(drops.iter().copied()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![0.0; m];
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let active: Vec<usize> = (0..m).filter(|&n| t.orders[n].1 <= mid && mid < drops[n]).collect();
            for &n in &active {
                match active.len() {
                    2 => s1[n] += hi - lo,
                    3 => s2[n] += hi - lo,
                    _ => {}
                }
            }
        }

        for n in 0..m {
            let (id, arrival) = t.orders[n];
            let &(_, state, joined) = seen.iter().find(|s| s.0 == id).expect("order state recorded");
            let delivery = drops[n] - arrival;
            let busy = delivery - 0.5 * s1[n] - 2.0 / 3.0 * s2[n];
            let ind = |s: Seen| if state == s { 1.0 } else { 0.0 };
            self.record(
                id,
                [
                    if joined { 1.0 } else { 0.0 },
                    ind(Seen::S11),
                    ind(Seen::S21),
                    ind(Seen::S22),
                    delivery,
                    s1[n],
                    s2[n],
                    busy,
                ],
            );
        }
    }
}

/// Simulates `n_orders` Poisson arrivals on one OD pair under the bundling
/// rules: an arrival joins the open taker if one exists, otherwise an idle
/// courier is dispatched and becomes the taker. A taker stops accepting orders
/// once it holds three orders or has picked up every assigned order. At the
/// end the open taker is closed so every order is delivered.
pub fn simulate_bundling(
    ctx: &ODGroundContext,
    n_orders: u64,
    seed: u64,
) -> Result<BundlingSimEstimates, DomainError> {
    ctx.validate()?;
    if n_orders == 0 {
        return Err(DomainError::new("n_orders must be at least 1"));
    }
    if !(ctx.lambda_all > 0.0) {
        return Err(DomainError::new("simulation needs a positive arrival rate"));
    }
    let w_c = pickup_time_first(ctx.pickup_scale, ctx.idle_count)?;
    let mut rs = streams(seed, 4).into_iter();
    let mut rng_arr = rs.next().unwrap();
    let mut rng_first = rs.next().unwrap();
    let rng_pick = rs.next().unwrap();
    let rng_drop = rs.next().unwrap();
    let inter = Exp::new(ctx.lambda_all).expect("positive rate");
    let first = ExpSampler::with_mean(w_c);

    let batching = Batching::new(n_orders);
    let mut sim = BundleSim {
        ctx,
        gap_pick: ExpSampler::with_mean(ctx.gap_origin),
        gap_drop: ExpSampler::with_mean(ctx.gap_dest),
        rng_pick,
        rng_drop,
        sums: vec![[0.0; N_BUNDLE_STATS]; batching.count],
        batching,
        delivered: 0,
    };

    let mut now = 0.0;
    let mut taker: Option<Taker> = None;
    // Arrival observations of orders on the open taker.
    let mut seen: Vec<(u64, Seen, bool)> = Vec::with_capacity(3);
    for id in 0..n_orders {
        now += inter.sample(&mut rng_arr);
        // Advance the taker's pickups up to the arrival instant. Ties go to
        // the arrival.
        if let Some(t) = taker.as_mut() {
            while t.pickup_done < now {
                if t.picking + 1 < t.orders.len() {
                    t.pickups.push(t.pickup_done);
                    t.picking += 1;
                    t.pickup_done += sim.gap_pick.sample(&mut sim.rng_pick);
                } else {
                    let closed = taker.take().unwrap();
                    sim.finish(closed, &seen);
                    seen.clear();
                    break;
                }
            }
        }
        match taker.as_mut() {
            Some(t) => {
                let state = match (t.orders.len(), t.picking) {
                    (1, 0) => Seen::S11,
                    (2, 0) => Seen::S21,
                    (2, 1) => Seen::S22,
                    other => unreachable!("open taker in state {other:?}"),
                };
                t.orders.push((id, now));
                seen.push((id, state, true));
                if t.orders.len() == 3 {
                    let closed = taker.take().unwrap();
                    sim.finish(closed, &seen);
                    seen.clear();
                }
            }
            None => {
                taker = Some(Taker {
                    orders: vec![(id, now)],
                    picking: 0,
                    pickup_done: now + first.sample(&mut rng_first),
                    pickups: Vec::with_capacity(3),
                });
                seen.push((id, Seen::None, false));
            }
        }
    }
    if let Some(t) = taker.take() {
        sim.finish(t, &seen);
    }

    let batches = sim.batching.count;
    let size = sim.batching.size as f64;
    let samples = sim.batching.samples();
    let est = |k: usize, scale: f64| {
        let means: Vec<f64> = sim.sums.iter().map(|s| s[k] / size * scale).collect();
        from_batches(&means, samples, seed)
    };
    debug_assert_eq!(sim.sums.len(), batches);
    Ok(BundlingSimEstimates {
        p_s: est(0, 1.0),
        rho11: est(1, 1.0),
        rho21: est(2, 1.0),
        rho22: est(3, 1.0),
        w_g: est(4, 1.0),
        t_s1: est(5, 1.0),
        t_s2: est(6, 1.0),
        busy_couriers: est(7, ctx.lambda_all),
        orders_created: n_orders,
        orders_delivered: sim.delivered,
    })
}

/// Results of the launchpad queue simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSimEstimates {
    pub n_drones: SimEstimate,
    pub n_orders: SimEstimate,
    pub p_block: SimEstimate,
    pub accept_rate: SimEstimate,
    /// Mean time from acceptance to departure on a drone.
    pub wait: SimEstimate,
    /// Time fraction spent in each state `n = -M ..= -M + occupancy.len() - 1`.
    pub occupancy: Vec<SimEstimate>,
    pub arrivals: u64,
    pub accepted: u64,
    pub blocked: u64,
}

/// Number of tracked occupancy states above `-M`.
const OCCUPANCY_STATES: usize = 41;

/// Birth-death simulation of the launchpad queue: order arrivals lower the
/// state (and are lost at `-M`), drone arrivals raise it.
pub fn simulate_double_queue(
    order_rate: f64,
    drone_rate: f64,
    capacity: u32,
    horizon_events: u64,
    seed: u64,
) -> Result<QueueSimEstimates, DomainError> {
    if !(order_rate > 0.0 && order_rate.is_finite()) {
        return Err(DomainError::new("order rate must be positive"));
    }
    if !(drone_rate >= 0.0) || drone_rate >= order_rate {
        return Err(DomainError::new(format!(
            "drone rate {drone_rate} must lie in [0, order rate {order_rate})"
        )));
    }
    if capacity == 0 {
        return Err(DomainError::new("queue capacity must be at least 1"));
    }
    let mut rs = streams(seed, 2).into_iter();
    let mut rng_o = rs.next().unwrap();
    let mut rng_d = rs.next().unwrap();
    let exp_o = Exp::new(order_rate).unwrap();
    let exp_d = (drone_rate > 0.0).then(|| Exp::new(drone_rate).unwrap());
    let mut next_o = exp_o.sample(&mut rng_o);
    let mut next_d = exp_d.as_ref().map_or(f64::INFINITY, |e| e.sample(&mut rng_d));

    let m = capacity as i64;
    let batching = Batching::new(horizon_events);
    let nb = batching.count;
    let mut dur = vec![0.0; nb];
    let mut drones_area = vec![0.0; nb];
    let mut orders_area = vec![0.0; nb];
    let mut occ_area = vec![vec![0.0; OCCUPANCY_STATES]; nb];
    let mut arr = vec![0u64; nb];
    let mut blk = vec![0u64; nb];
    let mut acc = vec![0u64; nb];
    let mut wait_sum = vec![0.0; nb];
    let mut wait_n = vec![0u64; nb];

    let mut n: i64 = 0;
    let mut now = 0.0;
    let mut waiting = std::collections::VecDeque::new();
    let (mut arrivals, mut accepted, mut blocked) = (0u64, 0u64, 0u64);
    for ev in 0..horizon_events {
        let t = next_o.min(next_d);
        let b = batching.batch(ev);
        if let Some(b) = b {
            let dt = t - now;
            dur[b] += dt;
            drones_area[b] += dt * n.max(0) as f64;
            orders_area[b] += dt * (-n).max(0) as f64;
            let k = (n + m) as usize;
            if k < OCCUPANCY_STATES {
                occ_area[b][k] += dt;
            }
        }
        now = t;
        if next_o <= next_d {
            arrivals += 1;
            if let Some(b) = b {
                arr[b] += 1;
            }
            if n == -m {
                blocked += 1;
                if let Some(b) = b {
                    blk[b] += 1;
                }
            } else {
                accepted += 1;
                if let Some(b) = b {
                    acc[b] += 1;
                }
                if n > 0 {
                    // A drone is waiting; the order leaves at once.
                    if let Some(b) = b {
                        wait_n[b] += 1;
                    }
                } else {
                    waiting.push_back(now);
                }
                n -= 1;
            }
            next_o = now + exp_o.sample(&mut rng_o);
        } else {
            if n < 0 {
                let since = waiting.pop_front().expect("waiting order exists");
                if let Some(b) = b {
                    wait_sum[b] += now - since;
                    wait_n[b] += 1;
                }
            }
            n += 1;
            next_d = now + exp_d.as_ref().unwrap().sample(&mut rng_d);
        }
    }

    let samples = batching.samples();
    let per = |f: &dyn Fn(usize) -> f64| {
        let means: Vec<f64> = (0..nb).map(f).collect();
        from_batches(&means, samples, seed)
    };
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let occupancy = (0..OCCUPANCY_STATES)
        .map(|k| per(&|b| ratio(occ_area[b][k], dur[b])))
        .collect();
    Ok(QueueSimEstimates {
        n_drones: per(&|b| ratio(drones_area[b], dur[b])),
        n_orders: per(&|b| ratio(orders_area[b], dur[b])),
        p_block: per(&|b| ratio(blk[b] as f64, arr[b] as f64)),
        accept_rate: per(&|b| ratio(acc[b] as f64, dur[b])),
        wait: per(&|b| ratio(wait_sum[b], wait_n[b] as f64)),
        occupancy,
        arrivals,
        accepted,
        blocked,
    })
}
