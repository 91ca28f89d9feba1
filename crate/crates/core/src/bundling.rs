//! Closed-form courier/order matching equilibrium for a single ground OD flow.
//!
//! Orders (seekers) of one OD pair arrive as a Poisson stream. A seeker joins
//! the courier that is currently en route to a pickup for the same OD (the
//! taker) if one exists, and is otherwise dispatched to an idle courier, which
//! then becomes the taker. Couriers carry at most three orders, pick up and drop
//! off in the same order, and stop accepting orders once every assigned order
//! has been picked up. At most one taker exists per OD at any time, which makes
//! the taker state a four-state Markov chain with the closed forms below.
//!
//! Taker states are named after (orders assigned, order currently being picked
//! up): `11`, `21` and `22`.

use serde::{Deserialize, Serialize};

use crate::DomainError;

/// Inputs of the bundling equilibrium for one ground OD pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ODGroundContext {
    /// Total ground order flow on the OD pair, orders/min.
    pub lambda_all: f64,
    /// Average number of idle couriers in the origin zone.
    pub idle_count: f64,
    /// Square-root-law pickup scale of the origin, min * sqrt(couriers).
    pub pickup_scale: f64,
    /// Mean gap between consecutive pickups at the origin, min.
    pub gap_origin: f64,
    /// Mean gap between consecutive drop-offs at the destination, min.
    pub gap_dest: f64,
    /// Courier travel time from origin to destination, min.
    pub trip_time: f64,
}

impl ODGroundContext {
    pub fn validate(&self) -> Result<(), DomainError> {
        let finite = [
            self.lambda_all,
            self.idle_count,
            self.pickup_scale,
            self.gap_origin,
            self.gap_dest,
            self.trip_time,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(DomainError::new("non-finite bundling input"));
        }
        if self.lambda_all < 0.0 {
            return Err(DomainError::new(format!(
                "negative ground flow {}",
                self.lambda_all
            )));
        }
        if self.idle_count <= 0.0 {
            return Err(DomainError::new(format!(
                "idle courier count must be positive, got {}",
                self.idle_count
            )));
        }
        if self.pickup_scale < 0.0 || self.gap_origin < 0.0 || self.gap_dest < 0.0 || self.trip_time < 0.0
        {
            return Err(DomainError::new("negative time parameter"));
        }
        Ok(())
    }

    pub fn with_flow(mut self, lambda_all: f64, idle_count: f64) -> Self {
        self.lambda_all = lambda_all;
        self.idle_count = idle_count;
        self
    }
}

/// Mean time for a dispatched idle courier to reach the first pickup
/// (square-root law).
pub fn pickup_time_first(pickup_scale: f64, idle_count: f64) -> Result<f64, DomainError> {
    if !(idle_count > 0.0) {
        return Err(DomainError::new(format!(
            "idle courier count must be positive, got {idle_count}"
        )));
    }
    Ok(pickup_scale / idle_count.sqrt())
}

/// Probability that a Poisson(`lambda_all`) arrival beats an exponential clock
/// with mean `horizon`.
pub fn taker_match_prob(lambda_all: f64, horizon: f64) -> f64 {
    let x = lambda_all * horizon;
    if x == 0.0 {
        0.0
    } else {
        x / (1.0 + x)
    }
}

/// Expected time a taker stays matchable in a state whose exit clock has mean
/// `horizon`.
fn availability(lambda_all: f64, horizon: f64) -> f64 {
    horizon / (1.0 + lambda_all * horizon)
}

/// Matching probabilities, availability windows and presence probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakerPresence {
    pub w_c: f64,
    pub p_t11: f64,
    pub p_t21: f64,
    pub p_t22: f64,
    pub tau11: f64,
    pub tau21: f64,
    pub tau22: f64,
    pub rho11: f64,
    pub rho21: f64,
    pub rho22: f64,
    pub p_s: f64,
    pub lam_um11: f64,
    pub lam_um21: f64,
    pub lam_um22: f64,
}

pub fn taker_presence(ctx: &ODGroundContext) -> Result<TakerPresence, DomainError> {
    ctx.validate()?;
    let lam = ctx.lambda_all;
    let w_c = pickup_time_first(ctx.pickup_scale, ctx.idle_count)?;
    let t_c = ctx.gap_origin;

    let p_t11 = taker_match_prob(lam, w_c);
    let p_t21 = p_t11;
    let p_t22 = taker_match_prob(lam, t_c);
    let tau11 = availability(lam, w_c);
    let tau21 = tau11;
    let tau22 = availability(lam, t_c);

    let x = lam * w_c;
    let y = lam * t_c;
    let a = x / (1.0 + x);
    let b = y / ((1.0 + x) * (1.0 + y));
    let rho11 = x / (1.0 + x * (2.0 + a + b));
    let rho21 = rho11 * a;
    let rho22 = rho11 * b;
    let p_s = rho11 + rho21 + rho22;

    let lam_um11 = lam * (1.0 - p_s);
    let lam_um21 = lam_um11 * p_t11;
    let lam_um22 = lam_um21 * (1.0 - p_t21);

    Ok(TakerPresence {
        w_c,
        p_t11,
        p_t21,
        p_t22,
        tau11,
        tau21,
        tau22,
        rho11,
        rho21,
        rho22,
        p_s,
        lam_um11,
        lam_um21,
        lam_um22,
    })
}

/// Residuals of the presence fixed-point system: Little's law for each taker
/// state and the seeker match probability as the sum of presence
/// probabilities.
pub fn fixed_point_residuals(ctx: &ODGroundContext, tp: &TakerPresence) -> [f64; 4] {
    let lam = ctx.lambda_all;
    let unmatched = lam * (1.0 - tp.p_s);
    [
        tp.rho11 - unmatched * tp.tau11,
        tp.rho21 - unmatched * tp.p_t11 * tp.tau21,
        tp.rho22 - unmatched * tp.p_t11 * (1.0 - tp.p_t21) * tp.tau22,
        tp.p_s - (tp.rho11 + tp.rho21 + tp.rho22),
    ]
}

/// Expected delivery times by matching outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTimes {
    pub t_taker_11: f64,
    pub t_taker_21: f64,
    pub t_taker_22: f64,
    pub t_taker: f64,
    pub t_idle: f64,
    pub w_g: f64,
}

pub fn expected_times(ctx: &ODGroundContext, tp: &TakerPresence) -> ExpectedTimes {
    let t_ci = ctx.gap_origin;
    let t_cj = ctx.gap_dest;
    let t_ij = ctx.trip_time;
    let w_c = tp.w_c;
    let (p11, p21, p22) = (tp.p_t11, tp.p_t21, tp.p_t22);
    let (tau11, tau21, tau22) = (tp.tau11, tp.tau21, tp.tau22);

    // Seeker becomes the second order of a taker in state 11.
    let t_taker_11 = p21 * (tau21 + w_c + 2.0 * t_ci)
        + (1.0 - p21) * p22 * (tau21 + tau22 + 2.0 * t_ci)
        + (1.0 - p21) * (1.0 - p22) * (tau21 + tau22)
        + t_ij
        + t_cj;
    // Seeker completes a bundle of three; it is picked up and dropped last.
    let t_taker_21 = w_c + 2.0 * t_ci + t_ij + 2.0 * t_cj;
    let t_taker_22 = 2.0 * t_ci + t_ij + 2.0 * t_cj;

    // Seeker dispatched to an idle courier: first picked up, first dropped.
    let t_idle = p11 * p21 * (tau11 + tau21 + w_c + 2.0 * t_ci)
        + p11 * (1.0 - p21) * p22 * (tau11 + tau21 + tau22 + 2.0 * t_ci)
        + p11 * (1.0 - p21) * (1.0 - p22) * (tau11 + tau21 + tau22)
        + (1.0 - p11) * tau11
        + t_ij;

    // With no takers the taker branch carries zero weight.
    let rho_sum = tp.rho11 + tp.rho21 + tp.rho22;
    let t_taker = if rho_sum > 0.0 {
        (tp.rho11 * t_taker_11 + tp.rho21 * t_taker_21 + tp.rho22 * t_taker_22) / rho_sum
    } else {
        t_idle
    };
    let w_g = tp.p_s * t_taker + (1.0 - tp.p_s) * t_idle;

    ExpectedTimes {
        t_taker_11,
        t_taker_21,
        t_taker_22,
        t_taker,
        t_idle,
        w_g,
    }
}

/// Average per-order time shared with exactly one (`t_s1`) and exactly two
/// (`t_s2`) other orders on the same courier.
pub fn shared_times(ctx: &ODGroundContext, tp: &TakerPresence) -> (f64, f64) {
    let t_ci = ctx.gap_origin;
    let t_cj = ctx.gap_dest;
    let t_ij = ctx.trip_time;
    let w_c = tp.w_c;
    let (p11, p21, p22) = (tp.p_t11, tp.p_t21, tp.p_t22);
    let (tau21, tau22) = (tp.tau21, tp.tau22);
    let idle = 1.0 - tp.p_s;

    let t_s1 = tp.rho11
        * (p21 * (tau21 + t_cj)
            + (1.0 - p21) * p22 * (tau21 + tau22 + t_cj)
            + (1.0 - p21) * (1.0 - p22) * (tau21 + tau22 + t_ij))
        + tp.rho21 * t_cj
        + tp.rho22 * t_cj
        + idle
            * (p11 * p21 * tau21
                + p11 * (1.0 - p21) * p22 * (tau21 + tau22)
                + p11 * (1.0 - p21) * (1.0 - p22) * (tau21 + tau22 + t_ij));

    let full_from_first = w_c + 2.0 * t_ci + t_ij;
    let full_from_second = 2.0 * t_ci + t_ij;
    let t_s2 = tp.rho11 * (p21 * full_from_first + (1.0 - p21) * p22 * full_from_second)
        + tp.rho21 * full_from_first
        + tp.rho22 * full_from_second
        + idle * (p11 * p21 * full_from_first + p11 * (1.0 - p21) * p22 * full_from_second);

    (t_s1, t_s2)
}

/// Every derived quantity of the equilibrium for one OD context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundlingEquilibrium {
    /// Ground flow the equilibrium was evaluated at.
    pub lambda_all: f64,
    pub w_c: f64,
    pub p_t11: f64,
    pub p_t21: f64,
    pub p_t22: f64,
    pub tau11: f64,
    pub tau21: f64,
    pub tau22: f64,
    pub rho11: f64,
    pub rho21: f64,
    pub rho22: f64,
    pub p_s: f64,
    pub lam_um11: f64,
    pub lam_um21: f64,
    pub lam_um22: f64,
    pub t_taker_11: f64,
    pub t_taker_21: f64,
    pub t_taker_22: f64,
    pub t_taker: f64,
    pub t_idle: f64,
    pub w_g: f64,
    pub t_s1: f64,
    pub t_s2: f64,
    /// Order-minutes of ground delivery per minute, `lambda * w_g`.
    pub theta1: f64,
    /// Over-counted courier-minutes per minute from shared time.
    pub theta2: f64,
}

impl BundlingEquilibrium {
    /// Column names in the order used by [`BundlingEquilibrium::csv_values`].
    pub const CSV_COLUMNS: [&'static str; 25] = [
        "lambda_all",
        "w_c",
        "p_t11",
        "p_t21",
        "p_t22",
        "tau11",
        "tau21",
        "tau22",
        "rho11",
        "rho21",
        "rho22",
        "p_s",
        "lam_um11",
        "lam_um21",
        "lam_um22",
        "t_taker_11",
        "t_taker_21",
        "t_taker_22",
        "t_taker",
        "t_idle",
        "w_g",
        "t_s1",
        "t_s2",
        "theta1",
        "theta2",
    ];

    pub fn csv_values(&self) -> [f64; 25] {
        [
            self.lambda_all,
            self.w_c,
            self.p_t11,
            self.p_t21,
            self.p_t22,
            self.tau11,
            self.tau21,
            self.tau22,
            self.rho11,
            self.rho21,
            self.rho22,
            self.p_s,
            self.lam_um11,
            self.lam_um21,
            self.lam_um22,
            self.t_taker_11,
            self.t_taker_21,
            self.t_taker_22,
            self.t_taker,
            self.t_idle,
            self.w_g,
            self.t_s1,
            self.t_s2,
            self.theta1,
            self.theta2,
        ]
    }
}

pub fn equilibrium(ctx: &ODGroundContext) -> Result<BundlingEquilibrium, DomainError> {
    let tp = taker_presence(ctx)?;
    let times = expected_times(ctx, &tp);
    let (t_s1, t_s2) = shared_times(ctx, &tp);
    let lam = ctx.lambda_all;
    Ok(BundlingEquilibrium {
        lambda_all: lam,
        w_c: tp.w_c,
        p_t11: tp.p_t11,
        p_t21: tp.p_t21,
        p_t22: tp.p_t22,
        tau11: tp.tau11,
        tau21: tp.tau21,
        tau22: tp.tau22,
        rho11: tp.rho11,
        rho21: tp.rho21,
        rho22: tp.rho22,
        p_s: tp.p_s,
        lam_um11: tp.lam_um11,
        lam_um21: tp.lam_um21,
        lam_um22: tp.lam_um22,
        t_taker_11: times.t_taker_11,
        t_taker_21: times.t_taker_21,
        t_taker_22: times.t_taker_22,
        t_taker: times.t_taker,
        t_idle: times.t_idle,
        w_g: times.w_g,
        t_s1,
        t_s2,
        theta1: lam * times.w_g,
        theta2: 0.5 * lam * t_s1 + 2.0 / 3.0 * lam * t_s2,
    })
}

/// The two surrogate labels `(theta1, theta2)` at a context.
pub fn bundling_outputs(ctx: &ODGroundContext) -> Result<(f64, f64), DomainError> {
    let eq = equilibrium(ctx)?;
    Ok((eq.theta1, eq.theta2))
}
