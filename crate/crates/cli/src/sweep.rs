//! Cost and demand sweeps over a base scenario.

use std::fmt;

use aerocourier::milp::{self, post_check, PlanSolution, PostCheckReport, SolveOptions, SolverBackend};
use aerocourier::scenario::NetworkScenario;
use clap::ValueEnum;
use serde::Serialize;

use crate::cache::{CacheStats, ModelCache};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Scale launchpad and kiosk construction costs.
    InfrastructureCost,
    /// Scale every OD demand rate.
    DemandScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepCase {
    Multiplier { value: f64 },
    /// Absolute default site costs in the scenario's money unit per minute.
    SiteCosts { launchpad: f64, kiosk: f64 },
}

impl fmt::Display for SweepCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepCase::Multiplier { value } => write!(f, "x{value}"),
            SweepCase::SiteCosts { launchpad, kiosk } => write!(f, "{launchpad}:{kiosk}"),
        }
    }
}

/// Site-cost multipliers, from a launchpad at 90 down to 15 against a base of 55.
const COST_RANGE: [f64; 2] = [90.0 / 55.0, 15.0 / 55.0];
/// Demand multipliers, from a peak of 0.1 up to 1.1 against a base of 0.3.
const DEMAND_RANGE: [f64; 2] = [0.1 / 0.3, 1.1 / 0.3];

/// `n` evenly spaced multipliers over the axis' reference range, ordered
/// from expensive to cheap and from low to high demand.
pub fn default_cases(axis: SweepAxis, n: usize) -> Vec<SweepCase> {
    let [a, b] = match axis {
        SweepAxis::InfrastructureCost => COST_RANGE,
        SweepAxis::DemandScale => DEMAND_RANGE,
    };
    match n {
        0 => Vec::new(),
        1 => vec![SweepCase::Multiplier { value: 1.0 }],
        _ => (0..n)
            .map(|k| SweepCase::Multiplier {
                value: a + (b - a) * k as f64 / (n - 1) as f64,
            })
            .collect(),
    }
}

/// Parses `--cases`: either a case count or a comma-separated list of
/// multipliers and, for the cost axis, `launchpad:kiosk` pairs.
pub fn parse_cases(text: &str, axis: SweepAxis) -> Result<Vec<SweepCase>, CliError> {
    let text = text.trim();
    if let Ok(n) = text.parse::<usize>() {
        return validate(default_cases(axis, n), axis);
    }
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("`{s}` is not a number in --cases")))
    };
    let mut cases = Vec::new();
    for item in text.split(',') {
        cases.push(match item.split_once(':') {
            Some((l, k)) => SweepCase::SiteCosts {
                launchpad: number(l)?,
                kiosk: number(k)?,
            },
            None => SweepCase::Multiplier { value: number(item)? },
        });
    }
    validate(cases, axis)
}

fn validate(cases: Vec<SweepCase>, axis: SweepAxis) -> Result<Vec<SweepCase>, CliError> {
    if cases.is_empty() {
        return Err(CliError::Validation("a sweep needs at least one case".into()));
    }
    for c in &cases {
        match *c {
            SweepCase::Multiplier { value } if !(value > 0.0 && value.is_finite()) => {
                return Err(CliError::Validation(format!("sweep multiplier must be positive, got {value}")));
            }
            SweepCase::SiteCosts { .. } if axis == SweepAxis::DemandScale => {
                return Err(CliError::Validation("site-cost pairs only apply to the infrastructure_cost axis".into()));
            }
            SweepCase::SiteCosts { launchpad, kiosk } if !(launchpad >= 0.0 && kiosk >= 0.0) => {
                return Err(CliError::Validation(format!(
                    "site costs must be nonnegative, got {launchpad}:{kiosk}"
                )));
            }
            _ => {}
        }
    }
    Ok(cases)
}

/// The scenario of one case.
pub fn case_scenario(base: &NetworkScenario, axis: SweepAxis, case: SweepCase) -> Result<NetworkScenario, CliError> {
    let costs = &base.params().costs;
    let s = match (axis, case) {
        (SweepAxis::InfrastructureCost, SweepCase::Multiplier { value }) => base.scaled_site_costs(value, value),
        (SweepAxis::InfrastructureCost, SweepCase::SiteCosts { launchpad, kiosk }) => {
            let ratio = |target: f64, default: f64| if default > 0.0 { target / default } else { 0.0 };
            if (costs.launchpad.default == 0.0 && launchpad > 0.0) || (costs.kiosk.default == 0.0 && kiosk > 0.0) {
                return Err(CliError::Validation(
                    "absolute site costs need a nonzero default cost to scale from".into(),
                ));
            }
            base.scaled_site_costs(
                ratio(launchpad, costs.launchpad.default),
                ratio(kiosk, costs.kiosk.default),
            )
        }
        (SweepAxis::DemandScale, SweepCase::Multiplier { value }) => base.scaled_demand(value),
        (SweepAxis::DemandScale, SweepCase::SiteCosts { .. }) => unreachable!("rejected by validate"),
    };
    s.map_err(CliError::from)
}

pub struct CaseOutcome {
    pub index: usize,
    pub case: SweepCase,
    pub scenario: NetworkScenario,
    pub solution: PlanSolution,
    pub report: PostCheckReport,
    /// Cache activity while preparing this case's surrogates.
    pub cache: CacheStats,
}

/// Solves every case in order. Cost cases share the base surrogates; demand
/// cases share one set trained on boxes stretched to the largest multiplier.
pub fn run_sweep(
    base: &NetworkScenario,
    axis: SweepAxis,
    cases: &[SweepCase],
    cache: &mut ModelCache,
    backend: &dyn SolverBackend,
    opts: &SolveOptions,
) -> Result<Vec<CaseOutcome>, CliError> {
    let demand_scale = cases
        .iter()
        .map(|c| match (axis, c) {
            (SweepAxis::DemandScale, SweepCase::Multiplier { value }) => *value,
            _ => 1.0,
        })
        .fold(0.0, f64::max);
    let mut out = Vec::with_capacity(cases.len());
    for (index, &case) in cases.iter().enumerate() {
        let scenario = case_scenario(base, axis, case)?;
        let before = cache.stats();
        let models = match axis {
            SweepAxis::InfrastructureCost => cache.models_for(&scenario, 1.0)?,
            SweepAxis::DemandScale => cache.models_for(base, demand_scale)?,
        };
        let cache_delta = cache.stats().since(before);
        log::info!("case {} ({case}): solving", index + 1);
        let solution = milp::plan(&scenario, &models, backend, opts).map_err(CliError::runtime)?;
        let report = post_check(&solution, &scenario);
        out.push(CaseOutcome {
            index: index + 1,
            case,
            scenario,
            solution,
            report,
            cache: cache_delta,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(cases: &[SweepCase]) -> Vec<f64> {
        cases
            .iter()
            .map(|c| match c {
                SweepCase::Multiplier { value } => *value,
                SweepCase::SiteCosts { .. } => panic!("unexpected pair"),
            })
            .collect()
    }

    #[test]
    fn default_cases_span_the_reference_ranges() {
        let cost = values(&default_cases(SweepAxis::InfrastructureCost, 5));
        assert_eq!(cost.len(), 5);
        assert_eq!(cost[0], COST_RANGE[0]);
        assert!((cost[4] - COST_RANGE[1]).abs() < 1e-15);
        assert!(cost.windows(2).all(|w| w[1] < w[0]));
        let demand = values(&default_cases(SweepAxis::DemandScale, 5));
        assert!(demand.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(values(&default_cases(SweepAxis::DemandScale, 1)), [1.0]);
    }

    #[test]
    fn lists_mix_multipliers_and_pairs() {
        let cases = parse_cases(" 1.5, 0.2:0.05 ,0.5", SweepAxis::InfrastructureCost).unwrap();
        assert_eq!(
            cases,
            [
                SweepCase::Multiplier { value: 1.5 },
                SweepCase::SiteCosts { launchpad: 0.2, kiosk: 0.05 },
                SweepCase::Multiplier { value: 0.5 },
            ]
        );
    }

    #[test]
    fn bad_lists_are_rejected_with_the_right_kind() {
        let kind = |t: &str, axis| match parse_cases(t, axis) {
            Err(CliError::Usage(_)) => "usage",
            Err(CliError::Validation(_)) => "validation",
            Err(CliError::Runtime(_)) => "runtime",
            Ok(_) => "ok",
        };
        assert_eq!(kind("0", SweepAxis::DemandScale), "validation");
        assert_eq!(kind("1,0", SweepAxis::DemandScale), "validation");
        assert_eq!(kind("-1:2", SweepAxis::InfrastructureCost), "validation");
        assert_eq!(kind("1:2", SweepAxis::DemandScale), "validation");
        assert_eq!(kind("inf", SweepAxis::DemandScale), "validation");
        assert_eq!(kind("1,x", SweepAxis::DemandScale), "usage");
        assert_eq!(kind("1:", SweepAxis::InfrastructureCost), "usage");
    }

    #[test]
    fn labels_round_trip_through_parsing() {
        let case = SweepCase::SiteCosts { launchpad: 0.25, kiosk: 0.5 };
        assert_eq!(case.to_string(), "0.25:0.5");
        let text = SweepCase::Multiplier { value: 2.5 }.to_string();
        assert_eq!(text, "x2.5");
        let back = parse_cases(text.trim_start_matches('x'), SweepAxis::DemandScale).unwrap();
        assert_eq!(back, [SweepCase::Multiplier { value: 2.5 }]);
    }
}
