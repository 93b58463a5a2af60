//! Executable checks of the mechanism's structural claims: the price/welfare
//! path integral, feasible-set projections, and money conservation.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{is_within_true_envelope, FirmOffer, Owner, Scenario, TechParams, UnitId, UnitOffer};
use crate::lp::{self, LpStatus};
use crate::market::{assemble_lp, assemble_restricted_lp, restricted_clear, FirmSchedule, Settlement, VarKind};
use crate::regulation::{money_balance, RegulationOutcome};

/// Finite-difference half-step in MW.
pub const FD_STEP: f64 = 0.01;
/// Envelope tolerance per 100 MW of path.
pub const ENVELOPE_TOL_PER_100MW: f64 = 1e-3;
pub const CONSERVATION_TOL: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 20_110_401;

const KINK_JUMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// Waypoints; consecutive entries differ in one coordinate.
    pub path: Vec<FirmSchedule>,
    pub path_length: f64,
    pub integral_estimate: f64,
    pub objective_delta: f64,
    pub residual: f64,
    pub tolerance: f64,
    /// Sample intervals where the finite-difference price jumped.
    pub kinks: usize,
    /// Largest gap between finite-difference and dual-based prices at the
    /// firm's node, over samples not adjacent to a kink.
    pub max_dual_gap: f64,
    pub applicable: bool,
    pub failure: Option<String>,
    pub pass: bool,
}

/// Coordinates of the firm schedule in (unit id, hour) order.
fn coordinates(x: &FirmSchedule) -> Vec<(UnitId, usize)> {
    x.units
        .iter()
        .flat_map(|(id, sched)| (0..sched.len()).map(move |h| (id.clone(), h)))
        .collect()
}

/// Axis-parallel path from `start` to `end`, moving coordinates in
/// (unit id, hour) order.
pub fn axis_path(start: &FirmSchedule, end: &FirmSchedule) -> Vec<FirmSchedule> {
    let mut path = vec![start.clone()];
    let mut current = start.clone();
    for (id, h) in coordinates(start) {
        let target = end.units[&id][h];
        if current.units[&id][h] != target {
            current.units.get_mut(&id).expect("same units")[h] = target;
            path.push(current.clone());
        }
    }
    path
}

fn truthful(s: &Scenario) -> FirmOffer {
    FirmOffer::truthful(s)
}

fn restricted_value(s: &Scenario, offer: &FirmOffer, x: &FirmSchedule) -> Result<(f64, Vec<Vec<f64>>)> {
    restricted_clear(s, offer, x).map(|r| (r.u_other, r.lmp))
}

/// Compares the integral of finite-difference nodal prices along the
/// canonical axis path from `start` to `end` with the change in the
/// restricted objective.
pub fn envelope_check(s: &Scenario, start: &FirmSchedule, end: &FirmSchedule, steps: usize) -> EnvelopeReport {
    envelope_check_path(s, &axis_path(start, end), steps)
}

/// As [`envelope_check`] over explicit waypoints; each leg must move a
/// single coordinate.
pub fn envelope_check_path(s: &Scenario, waypoints: &[FirmSchedule], steps: usize) -> EnvelopeReport {
    let steps = steps.max(1);
    let offer = truthful(s);
    let mut report = EnvelopeReport {
        path: waypoints.to_vec(),
        path_length: 0.0,
        integral_estimate: 0.0,
        objective_delta: 0.0,
        residual: 0.0,
        tolerance: 0.0,
        kinks: 0,
        max_dual_gap: 0.0,
        applicable: true,
        failure: None,
        pass: false,
    };
    let not_applicable = |mut report: EnvelopeReport, why: String| {
        report.applicable = false;
        report.failure = Some(why);
        report.pass = false;
        report
    };
    let Some(first) = waypoints.first() else {
        return not_applicable(report, "empty path".into());
    };
    let last = waypoints.last().expect("nonempty");

    let mut widen = 0.0;
    for leg in waypoints.windows(2) {
        let (a, b) = (&leg[0], &leg[1]);
        let moved: Vec<(UnitId, usize)> = coordinates(a)
            .into_iter()
            .filter(|(id, h)| a.units[id][*h] != b.units[id][*h])
            .collect();
        let (id, h) = match moved.as_slice() {
            [] => continue,
            [one] => one.clone(),
            _ => return not_applicable(report, "path leg moves more than one coordinate".into()),
        };
        let node = s
            .unit(&id)
            .and_then(|u| s.network.node_index(&u.node))
            .expect("firm unit node");
        let (x0, x1) = (a.units[&id][h], b.units[&id][h]);
        let delta = (x1 - x0) / steps as f64;
        report.path_length += (x1 - x0).abs();

        let at = |x: f64| {
            let mut p = a.clone();
            p.units.get_mut(&id).expect("unit")[h] = x;
            p
        };
        let samples: Vec<Result<(f64, f64)>> = (0..=steps)
            .into_par_iter()
            .map(|k| {
                let x = x0 + delta * k as f64;
                let (up, _) = restricted_value(s, &offer, &at(x + FD_STEP))?;
                let (down, _) = restricted_value(s, &offer, &at(x - FD_STEP))?;
                let (_, lmp) = restricted_value(s, &offer, &at(x))?;
                Ok(((up - down) / (2.0 * FD_STEP), lmp[node][h]))
            })
            .collect();
        let mut prices = Vec::with_capacity(samples.len());
        for (k, sample) in samples.into_iter().enumerate() {
            match sample {
                Ok(v) => prices.push(v),
                Err(e) => {
                    let x = x0 + delta * k as f64;
                    return not_applicable(report, format!("unit {id} hour {h} near {x} MW: {e}"));
                }
            }
        }
        let mut near_kink = vec![false; prices.len()];
        for k in 0..steps {
            let (p0, p1) = (prices[k].0, prices[k + 1].0);
            report.integral_estimate += 0.5 * (p0 + p1) * delta;
            let jump = (p1 - p0).abs();
            if jump > KINK_JUMP {
                report.kinks += 1;
                widen += jump * delta.abs();
                near_kink[k] = true;
                near_kink[k + 1] = true;
            }
        }
        for (k, &(fd, dual)) in prices.iter().enumerate() {
            if !near_kink[k] {
                report.max_dual_gap = report.max_dual_gap.max((fd - dual).abs());
            }
        }
    }

    let end_value = restricted_value(s, &offer, last);
    let start_value = restricted_value(s, &offer, first);
    match (start_value, end_value) {
        (Ok((u0, _)), Ok((u1, _))) => report.objective_delta = u1 - u0,
        (Err(e), _) | (_, Err(e)) => return not_applicable(report, format!("endpoint: {e}")),
    }
    report.residual = report.integral_estimate - report.objective_delta;
    report.tolerance = ENVELOPE_TOL_PER_100MW * (report.path_length / 100.0).max(1.0) + widen;
    report.pass = report.residual.abs() <= report.tolerance;
    report
}

/// Claimed technical parameters for every firm unit.
pub type ClaimedParams = BTreeMap<UnitId, TechParams>;

pub fn true_params(s: &Scenario) -> ClaimedParams {
    s.firm_units().map(|u| (u.id.clone(), u.true_params)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionViolation {
    pub claimed: ClaimedParams,
    pub schedule: FirmSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    /// Schedules drawn per claimed set (after the ramp filter).
    pub samples: usize,
    /// Of those, schedules the network can also accommodate, per claimed set.
    pub deliverable: Vec<usize>,
    pub violations: Vec<ProjectionViolation>,
    /// Claimed-feasible schedules the full clearing LP under the claim rejected.
    pub oracle_mismatches: usize,
    pub truth_feasible_samples: usize,
    pub union_coverage: f64,
}

impl ProjectionReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty() && self.oracle_mismatches == 0
    }
}

fn offer_with(s: &Scenario, params: &ClaimedParams) -> FirmOffer {
    let mut offer = FirmOffer::default();
    for u in s.firm_units() {
        offer.units.insert(
            u.id.clone(),
            UnitOffer {
                params: params[&u.id],
                curve: u.true_curve.clone(),
            },
        );
    }
    offer
}

/// Draws hourly outputs uniformly within `params` bounds, rejecting draws
/// that break ramp limits. Returns `None` after too many rejections.
fn draw_schedule(rng: &mut ChaCha8Rng, params: &ClaimedParams, hours: usize) -> Option<FirmSchedule> {
    const MAX_ATTEMPTS: usize = 1_000_000;
    for _ in 0..MAX_ATTEMPTS {
        let mut units = BTreeMap::new();
        let mut ok = true;
        for (id, p) in params {
            let sched: Vec<f64> = (0..hours)
                .map(|_| {
                    if p.p_max > p.p_min {
                        rng.gen_range(p.p_min..=p.p_max)
                    } else {
                        p.p_min
                    }
                })
                .collect();
            if !p.admits(&sched, 0.0) {
                ok = false;
                break;
            }
            units.insert(id.clone(), sched);
        }
        if ok {
            return Some(FirmSchedule { units });
        }
    }
    None
}

/// Whether the rest of the market can accommodate `x`; on success returns
/// the other players' LP values keyed by column kind.
fn deliverable(s: &Scenario, x: &FirmSchedule) -> Result<Option<HashMap<VarKind, f64>>> {
    let (lp, layout) = assemble_restricted_lp(s, x)?;
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(layout.vars.iter().copied().zip(sol.primal.iter().copied()).collect()))
}

/// Full clearing-LP feasibility of `x` with the other players at `others`,
/// under the claimed firm parameters.
fn full_feasible(s: &Scenario, claim: &ClaimedParams, x: &FirmSchedule, others: &HashMap<VarKind, f64>) -> Result<bool> {
    let offer = offer_with(s, claim);
    let (lp, layout) = assemble_lp(s, &offer)?;
    let mut point = vec![0.0; lp.num_vars()];
    for (k, unit) in s.units.iter().enumerate() {
        if unit.owner != Owner::Firm {
            continue;
        }
        let curve = &offer.units[&unit.id].curve;
        for (h, cols) in layout.unit_vars[k].iter().enumerate() {
            for (&j, q) in cols.iter().zip(curve.fill(x.units[&unit.id][h])) {
                point[j] = q;
            }
        }
    }
    for (j, v) in layout.vars.iter().enumerate() {
        if let Some(&value) = others.get(v) {
            point[j] = value;
        }
    }
    Ok(lp::is_feasible(&lp, &point)?.feasible)
}

/// Samples schedules admitted by each claimed parameter set and checks
/// that every one the network can deliver is also feasible under the true
/// parameters; then measures how much of the true feasible set the claimed
/// sets cover together.
pub fn projection_check(s: &Scenario, claimed_set: &[ClaimedParams], samples: usize, seed: u64) -> Result<ProjectionReport> {
    let truth = true_params(s);
    for claim in claimed_set {
        for u in s.firm_units() {
            let p = claim
                .get(&u.id)
                .ok_or_else(|| Error::OfferMismatch(format!("claimed set lacks unit {}", u.id)))?;
            if !is_within_true_envelope(p, &u.true_params) {
                return Err(Error::OutsideTrueEnvelope { unit: u.id.clone() });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProjectionReport {
        samples,
        deliverable: Vec::with_capacity(claimed_set.len()),
        violations: Vec::new(),
        oracle_mismatches: 0,
        truth_feasible_samples: 0,
        union_coverage: 0.0,
    };

    for claim in claimed_set {
        let draws: Vec<FirmSchedule> = (0..samples).map_while(|_| draw_schedule(&mut rng, claim, s.hours)).collect();
        let results: Vec<Result<(bool, bool, bool)>> = draws
            .par_iter()
            .map(|x| {
                let Some(others) = deliverable(s, x)? else {
                    return Ok((false, false, false));
                };
                Ok((true, full_feasible(s, claim, x, &others)?, full_feasible(s, &truth, x, &others)?))
            })
            .collect();
        let mut count = 0;
        for (x, r) in draws.iter().zip(results) {
            let (delivered, under_claim, under_truth) = r?;
            if !delivered {
                continue;
            }
            count += 1;
            if !under_claim {
                report.oracle_mismatches += 1;
            } else if !under_truth {
                report.violations.push(ProjectionViolation {
                    claimed: claim.clone(),
                    schedule: x.clone(),
                });
            }
        }
        report.deliverable.push(count);
    }

    let draws: Vec<FirmSchedule> = (0..samples).map_while(|_| draw_schedule(&mut rng, &truth, s.hours)).collect();
    let delivered: Vec<bool> = draws
        .par_iter()
        .map(|x| deliverable(s, x).map(|d| d.is_some()))
        .collect::<Result<_>>()?;
    let mut covered = 0;
    for (x, ok) in draws.iter().zip(delivered) {
        if !ok {
            continue;
        }
        report.truth_feasible_samples += 1;
        let reachable = claimed_set
            .iter()
            .any(|claim| claim.iter().all(|(id, p)| p.admits(&x.units[id], 0.0)));
        if reachable {
            covered += 1;
        }
    }
    report.union_coverage = if report.truth_feasible_samples == 0 {
        f64::NAN
    } else {
        covered as f64 / report.truth_feasible_samples as f64
    };
    Ok(report)
}

/// `(load payments + uplift allocations) − (other generators' receipts +
/// firm payment + congestion rent)`.
pub fn money_conservation_check(s: &Scenario, outcome: &RegulationOutcome, settlement: &Settlement) -> f64 {
    money_balance(s, outcome, settlement)
}
