//! Settlement rule for the regulated firm.
//!
//! The market is cleared twice: once with the firm's submitted offer (the
//! base run, which is final for dispatch and prices) and once with the
//! regulator's estimate of the firm's true offer (the reference run). The
//! firm is paid
//!
//! ```text
//! R + U_other(base) − U_other(reference)
//! ```
//!
//! where `R` is the LMP revenue of the firm's reference-run schedule at
//! reference-run prices. Up to the constant `c = R − U_other(reference)`
//! this is the whole welfare of the residual market, so the firm's profit
//! is maximized by the offer that maximizes true welfare. The gap between
//! this payment and the firm's base-run LMP revenue is an uplift (or
//! downlift) charged to loads as lump sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RunKind};
use crate::grid::{is_within_true_envelope, FirmOffer, Owner, Scenario, UnitId, UnitOffer};
use crate::market::{clear_as, settle, ClearingResult, Settlement};

/// The regulator's estimate of the firm's true offer. It may lie outside
/// the true envelope.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegulatorEstimate(pub FirmOffer);

impl RegulatorEstimate {
    pub fn exact(s: &Scenario) -> Self {
        Self(FirmOffer::truthful(s))
    }

    /// Applies `f` to every unit's estimated offer.
    pub fn map_units(s: &Scenario, mut f: impl FnMut(&UnitId, &mut UnitOffer)) -> Self {
        let mut offer = FirmOffer::truthful(s);
        for (id, unit) in offer.units.iter_mut() {
            f(id, unit);
        }
        Self(offer)
    }

    pub fn as_offer(&self) -> &FirmOffer {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpliftRule {
    /// Lump sums in proportion to each load's cleared MWh.
    #[default]
    ProRataConsumption,
}

/// Whether the regulator applies the rule for the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decision {
    #[default]
    Apply,
    Waive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationOutcome {
    pub base_run: ClearingResult,
    pub reference_run: ClearingResult,
    /// LMP revenue of the reference firm schedule at reference prices.
    pub reference_revenue: f64,
    pub c: f64,
    pub regulated_revenue: f64,
    pub lmp_revenue_at_base: f64,
    pub decision: Decision,
    pub uplift: f64,
    /// Uplift share per demand bid.
    pub allocations: Vec<f64>,
}

impl RegulationOutcome {
    /// What the firm is actually paid for the day.
    pub fn firm_payment(&self) -> f64 {
        match self.decision {
            Decision::Apply => self.regulated_revenue,
            Decision::Waive => self.lmp_revenue_at_base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitReport {
    /// Profit under the regulated settlement with a truthful offer, at true cost.
    pub pi: f64,
    /// Profit when the firm's offer is replaced by the estimate.
    pub pi_standard: f64,
    /// True welfare of the reference outcome minus that of the truthful outcome.
    pub delta_u: f64,
    /// `pi − (−delta_u + pi_standard)`.
    pub identity_residual: f64,
}

fn firm_revenue_at(s: &Scenario, run: &ClearingResult) -> f64 {
    run.firm_lmp_revenue(s)
}

/// Runs both clearing legs and applies the regulated revenue rule.
pub fn run_regulation(s: &Scenario, submitted: &FirmOffer, estimate: &RegulatorEstimate) -> Result<RegulationOutcome> {
    run_regulation_with(s, submitted, estimate, Decision::Apply)
}

pub fn run_regulation_with(
    s: &Scenario,
    submitted: &FirmOffer,
    estimate: &RegulatorEstimate,
    decision: Decision,
) -> Result<RegulationOutcome> {
    submitted.check_units(s)?;
    estimate.as_offer().check_units(s)?;
    for u in s.firm_units() {
        let claimed = &submitted.get(&u.id).expect("checked").params;
        if !is_within_true_envelope(claimed, &u.true_params) {
            return Err(Error::OutsideTrueEnvelope { unit: u.id.clone() });
        }
    }
    let (base, reference) = rayon::join(
        || clear_as(s, submitted, RunKind::Base),
        || clear_as(s, estimate.as_offer(), RunKind::Reference),
    );
    let (base_run, reference_run) = (base?, reference?);
    Ok(assemble_outcome(s, base_run, reference_run, decision))
}

/// Combines an already-computed base run and reference run. Used by the
/// sweep, which reuses one reference run across all submitted offers.
pub(crate) fn assemble_outcome(
    s: &Scenario,
    base_run: ClearingResult,
    reference_run: ClearingResult,
    decision: Decision,
) -> RegulationOutcome {
    let reference_revenue = firm_revenue_at(s, &reference_run);
    let c = reference_revenue - reference_run.u_other;
    let regulated_revenue = reference_revenue + base_run.u_other - reference_run.u_other;
    let lmp_revenue_at_base = firm_revenue_at(s, &base_run);
    let mut outcome = RegulationOutcome {
        base_run,
        reference_run,
        reference_revenue,
        c,
        regulated_revenue,
        lmp_revenue_at_base,
        decision,
        uplift: 0.0,
        allocations: vec![0.0; s.demands.len()],
    };
    outcome.uplift = outcome.firm_payment() - lmp_revenue_at_base;
    // Demand is positive in every hour of a validated scenario.
    outcome.allocations =
        allocate_uplift(&outcome, UpliftRule::ProRataConsumption).unwrap_or_else(|_| vec![0.0; s.demands.len()]);
    outcome
}

/// Firm profit under the regulated rule, with output priced at true cost.
pub fn regulated_profit(s: &Scenario, submitted: &FirmOffer, estimate: &RegulatorEstimate) -> Result<f64> {
    let outcome = run_regulation(s, submitted, estimate)?;
    Ok(outcome.regulated_revenue - outcome.base_run.firm_true_cost)
}

/// Profit when the regulator replaces the firm's offer by its estimate.
/// Output beyond a true curve's last block is priced at that block's price.
pub fn standard_method(s: &Scenario, estimate: &RegulatorEstimate) -> Result<f64> {
    let reference = clear_as(s, estimate.as_offer(), RunKind::Reference)?;
    Ok(firm_revenue_at(s, &reference) - reference.firm_true_cost)
}

/// Compares the regulated rule (truthful offer) with outright replacement.
pub fn compare_methods(s: &Scenario, estimate: &RegulatorEstimate) -> Result<ProfitReport> {
    let outcome = run_regulation(s, &FirmOffer::truthful(s), estimate)?;
    Ok(profit_report(&outcome))
}

pub fn profit_report(outcome: &RegulationOutcome) -> ProfitReport {
    let pi = outcome.regulated_revenue - outcome.base_run.firm_true_cost;
    let pi_standard = outcome.reference_revenue - outcome.reference_run.firm_true_cost;
    let delta_u = outcome.reference_run.true_welfare() - outcome.base_run.true_welfare();
    ProfitReport {
        pi,
        pi_standard,
        delta_u,
        identity_residual: pi - (-delta_u + pi_standard),
    }
}

/// Splits the outcome's uplift over loads as lump sums.
pub fn allocate_uplift(outcome: &RegulationOutcome, rule: UpliftRule) -> Result<Vec<f64>> {
    match rule {
        UpliftRule::ProRataConsumption => {
            let energy: Vec<f64> = outcome
                .base_run
                .dispatch
                .consumption
                .iter()
                .map(|per_hour| per_hour.iter().sum())
                .collect();
            pro_rata(outcome.uplift, &energy)
        }
    }
}

pub(crate) fn pro_rata(amount: f64, energy: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroConsumption);
    }
    Ok(energy.iter().map(|e| amount * e / total).collect())
}

/// Money in minus money out across all participants for one regulated day.
pub fn money_balance(s: &Scenario, outcome: &RegulationOutcome, settlement: &Settlement) -> f64 {
    let other_receipts: f64 = settlement
        .generator_receipts
        .iter()
        .zip(&s.units)
        .filter(|(_, u)| u.owner == Owner::Other)
        .map(|(r, _)| r)
        .sum();
    let inflow = settlement.total_load_payments() + outcome.allocations.iter().sum::<f64>();
    let outflow = other_receipts + outcome.firm_payment() + settlement.congestion_rent;
    inflow - outflow
}

/// Settles the base run of an outcome.
pub fn settle_outcome(s: &Scenario, outcome: &RegulationOutcome) -> Settlement {
    settle(s, &outcome.base_run)
}
