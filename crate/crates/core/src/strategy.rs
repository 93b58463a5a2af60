//! Grid search over the firm's admissible offer distortions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, RunKind};
use crate::grid::{is_within_true_envelope, FirmOffer, OfferBlock, OfferCurve, Scenario, UnitOffer};
use crate::market::{clear, clear_as, ClearingResult, Dispatch};
use crate::regulation::{assemble_outcome, Decision, RegulatorEstimate};

/// Profit ties are resolved within this margin.
pub const TIE_TOL: f64 = 1e-6;

/// A uniform distortion applied to every firm unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    /// Multiplies every block price.
    pub price_scale: f64,
    /// Added to every block price after scaling.
    pub price_add: f64,
    /// Fraction of true p_max withheld.
    pub withhold: f64,
    /// Multiplies both ramp limits.
    pub ramp_scale: f64,
}

impl DistortionSpec {
    pub const TRUTHFUL: Self = Self {
        price_scale: 1.0,
        price_add: 0.0,
        withhold: 0.0,
        ramp_scale: 1.0,
    };

    pub fn is_truthful(&self) -> bool {
        *self == Self::TRUTHFUL
    }
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self::TRUTHFUL
    }
}

/// Builds the firm offer produced by `spec` from the scenario's true data.
pub fn apply_distortion(s: &Scenario, spec: &DistortionSpec) -> Result<FirmOffer> {
    let DistortionSpec {
        price_scale,
        price_add,
        withhold,
        ramp_scale,
    } = *spec;
    if !(price_scale >= 0.0) || !price_scale.is_finite() || !price_add.is_finite() {
        return Err(Error::InvalidDistortion(format!("price scale {price_scale}, add {price_add}")));
    }
    if !(0.0..=1.0).contains(&withhold) {
        return Err(Error::InvalidDistortion(format!("withhold {withhold} outside [0, 1]")));
    }
    if !(ramp_scale > 0.0 && ramp_scale <= 1.0) {
        return Err(Error::InvalidDistortion(format!("ramp scale {ramp_scale} outside (0, 1]")));
    }
    let mut offer = FirmOffer::default();
    for u in s.firm_units() {
        let truth = u.true_params;
        let mut params = truth;
        params.p_max = truth.p_max * (1.0 - withhold);
        params.ramp_up = truth.ramp_up * ramp_scale;
        params.ramp_down = truth.ramp_down * ramp_scale;
        if params.p_max < params.p_min {
            return Err(Error::InvalidDistortion(format!(
                "unit {}: claimed p_max {} below p_min {}",
                u.id, params.p_max, params.p_min
            )));
        }
        debug_assert!(is_within_true_envelope(&params, &truth));
        let curve = OfferCurve::new(
            u.true_curve
                .blocks
                .iter()
                .map(|b| OfferBlock {
                    quantity: b.quantity,
                    price: price_scale * b.price + price_add,
                })
                .collect(),
        );
        offer.units.insert(u.id.clone(), UnitOffer { params, curve });
    }
    Ok(offer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "alpha")]
    pub price_scales: Vec<f64>,
    #[serde(rename = "beta")]
    pub price_adds: Vec<f64>,
    #[serde(rename = "withhold")]
    pub withholds: Vec<f64>,
    #[serde(rename = "ramp_scale")]
    pub ramp_scales: Vec<f64>,
}

impl Default for GridSpec {
    /// 13 × 5 × 5 × 3 points.
    fn default() -> Self {
        Self {
            price_scales: (0..13).map(|k| 0.25 + 0.25 * k as f64).collect(),
            price_adds: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            withholds: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            ramp_scales: vec![0.5, 0.75, 1.0],
        }
    }
}

impl GridSpec {
    pub fn truthful_only() -> Self {
        Self {
            price_scales: vec![1.0],
            price_adds: vec![0.0],
            withholds: vec![0.0],
            ramp_scales: vec![1.0],
        }
    }

    /// Cartesian product in (price scale, price add, withhold, ramp scale) order.
    pub fn points(&self) -> Vec<DistortionSpec> {
        let mut out = Vec::with_capacity(self.len());
        for &price_scale in &self.price_scales {
            for &price_add in &self.price_adds {
                for &withhold in &self.withholds {
                    for &ramp_scale in &self.ramp_scales {
                        out.push(DistortionSpec {
                            price_scale,
                            price_add,
                            withhold,
                            ramp_scale,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.price_scales.len() * self.price_adds.len() * self.withholds.len() * self.ramp_scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Plain LMP settlement.
    None,
    /// Offer replaced by the regulator's estimate.
    Standard,
    /// Regulated revenue rule.
    Proposed,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::None, Regime::Standard, Regime::Proposed];
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointValues {
    pub profit_unregulated: f64,
    pub profit_standard: f64,
    pub profit_proposed: f64,
    pub deadweight_loss: f64,
    pub fingerprint: String,
}

impl PointValues {
    pub fn profit(&self, regime: Regime) -> f64 {
        match regime {
            Regime::None => self.profit_unregulated,
            Regime::Standard => self.profit_standard,
            Regime::Proposed => self.profit_proposed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub spec: DistortionSpec,
    /// `Err` holds the reason the point could not be cleared.
    pub values: std::result::Result<PointValues, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Argmax {
    pub best: f64,
    /// Every grid index within [`TIE_TOL`] of `best`, ascending.
    pub ties: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub truthful_index: usize,
    pub argmax_unregulated: Argmax,
    pub argmax_standard: Argmax,
    pub argmax_proposed: Argmax,
}

impl SweepResult {
    pub fn argmax(&self, regime: Regime) -> &Argmax {
        match regime {
            Regime::None => &self.argmax_unregulated,
            Regime::Standard => &self.argmax_standard,
            Regime::Proposed => &self.argmax_proposed,
        }
    }

    pub fn truthful(&self) -> &PointValues {
        self.points[self.truthful_index]
            .values
            .as_ref()
            .expect("truthful point is always cleared")
    }

    pub fn evaluated(&self) -> impl Iterator<Item = (usize, &PointValues)> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.values.as_ref().ok().map(|v| (i, v)))
    }
}

/// Rounds every dispatch quantity to 1e-6 MW and hashes the result.
pub fn dispatch_fingerprint(dispatch: &Dispatch) -> String {
    let mut hasher = Sha256::new();
    for v in dispatch.flatten() {
        let q = (v * 1e6).round() as i64;
        // -0 and 0 round to the same integer.
        hasher.update(q.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// True welfare lost by clearing `submitted` instead of the truthful offer.
pub fn deadweight_loss(s: &Scenario, submitted: &FirmOffer) -> Result<f64> {
    submitted.check_units(s)?;
    for u in s.firm_units() {
        if !is_within_true_envelope(&submitted.get(&u.id).expect("checked").params, &u.true_params) {
            return Err(Error::OutsideTrueEnvelope { unit: u.id.clone() });
        }
    }
    let truthful = clear(s, &FirmOffer::truthful(s))?;
    let distorted = clear(s, submitted)?;
    Ok(truthful.true_welfare() - distorted.true_welfare())
}

/// Evaluates every grid point under all three regimes with one shared
/// regulator estimate.
pub fn best_response_sweep(s: &Scenario, estimate: &RegulatorEstimate, grid: &GridSpec) -> Result<SweepResult> {
    let specs = grid.points();
    let truthful_index = specs
        .iter()
        .position(DistortionSpec::is_truthful)
        .ok_or_else(|| Error::InvalidDistortion("grid does not contain the truthful point".into()))?;

    let truthful = clear(s, &FirmOffer::truthful(s))?;
    let reference = clear_as(s, estimate.as_offer(), RunKind::Reference)?;
    let optimal_welfare = truthful.true_welfare();

    let points: Vec<SweepPoint> = specs
        .par_iter()
        .map(|spec| SweepPoint {
            spec: *spec,
            values: evaluate(s, spec, &reference, optimal_welfare).map_err(|e| e.to_string()),
        })
        .collect();

    let argmax = |regime: Regime| -> Argmax {
        let best = points
            .iter()
            .filter_map(|p| p.values.as_ref().ok())
            .map(|v| v.profit(regime))
            .fold(f64::NEG_INFINITY, f64::max);
        let ties = points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.values.as_ref().ok().map(|v| (i, v)))
            .filter(|(_, v)| v.profit(regime) >= best - TIE_TOL)
            .map(|(i, _)| i)
            .collect();
        Argmax { best, ties }
    };
    if let Err(e) = &points[truthful_index].values {
        return Err(Error::InvalidDistortion(format!("truthful point failed: {e}")));
    }
    Ok(SweepResult {
        argmax_unregulated: argmax(Regime::None),
        argmax_standard: argmax(Regime::Standard),
        argmax_proposed: argmax(Regime::Proposed),
        points,
        truthful_index,
    })
}

fn evaluate(
    s: &Scenario,
    spec: &DistortionSpec,
    reference: &ClearingResult,
    optimal_welfare: f64,
) -> Result<PointValues> {
    let offer = apply_distortion(s, spec)?;
    let base = clear(s, &offer)?;
    let fingerprint = dispatch_fingerprint(&base.dispatch);
    let deadweight_loss = optimal_welfare - base.true_welfare();
    let outcome = assemble_outcome(s, base, reference.clone(), Decision::Apply);
    let true_cost = outcome.base_run.firm_true_cost;
    Ok(PointValues {
        profit_unregulated: outcome.lmp_revenue_at_base - true_cost,
        profit_standard: outcome.reference_revenue - outcome.reference_run.firm_true_cost,
        profit_proposed: outcome.regulated_revenue - true_cost,
        deadweight_loss,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = GridSpec::default();
        assert_eq!(g.len(), 13 * 5 * 5 * 3);
        assert_eq!(g.price_scales.first(), Some(&0.25));
        assert_eq!(g.price_scales.last(), Some(&3.25));
        assert_eq!(g.points().iter().filter(|p| p.is_truthful()).count(), 1);
    }
}
