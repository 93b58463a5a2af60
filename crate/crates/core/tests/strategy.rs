mod common;

use approx::assert_abs_diff_eq;
use damsim_core::regulation::RegulatorEstimate;
use damsim_core::strategy::{deadweight_loss, dispatch_fingerprint, Regime};
use damsim_core::{apply_distortion, best_response_sweep, clear, DistortionSpec, Error, FirmOffer, GridSpec, OfferCurve};
use proptest::prelude::*;

fn spec(price_scale: f64, price_add: f64, withhold: f64, ramp_scale: f64) -> DistortionSpec {
    DistortionSpec {
        price_scale,
        price_add,
        withhold,
        ramp_scale,
    }
}

fn small_grid() -> GridSpec {
    GridSpec {
        price_scales: vec![0.5, 1.0, 1.5, 2.0],
        price_adds: vec![0.0],
        withholds: vec![0.0, 0.25, 0.5],
        ramp_scales: vec![1.0],
    }
}

#[test]
fn distortion_examples() {
    let s = common::twonode();
    assert_eq!(apply_distortion(&s, &DistortionSpec::TRUTHFUL).unwrap(), FirmOffer::truthful(&s));
    let doubled = apply_distortion(&s, &spec(2.0, 0.0, 0.0, 1.0)).unwrap();
    assert_eq!(doubled.units["g1"].curve, OfferCurve::flat(100.0, 20.0));
    let halved = apply_distortion(&s, &spec(1.0, 0.0, 0.5, 1.0)).unwrap();
    assert_eq!(halved.units["g1"].params.p_max, 50.0);
    let shifted = apply_distortion(&s, &spec(1.5, -5.0, 0.0, 0.5)).unwrap();
    assert_eq!(shifted.units["g1"].curve.blocks[0].price, 10.0);
    assert_eq!(shifted.units["g1"].params.ramp_up, 50.0);
}

#[test]
fn distortion_rejects_bad_specs() {
    let s = common::fivenode();
    // ga has p_min 10 of p_max 90: withholding 95% leaves 4.5 < 10.
    assert!(matches!(apply_distortion(&s, &spec(1.0, 0.0, 0.95, 1.0)), Err(Error::InvalidDistortion(_))));
    assert!(apply_distortion(&s, &spec(-1.0, 0.0, 0.0, 1.0)).is_err());
    assert!(apply_distortion(&s, &spec(1.0, 0.0, 1.5, 1.0)).is_err());
    assert!(apply_distortion(&s, &spec(1.0, 0.0, 0.0, 0.0)).is_err());
    assert!(apply_distortion(&s, &spec(1.0, 0.0, 0.0, 1.2)).is_err());
}

#[test]
fn deadweight_loss_examples() {
    let s = common::twonode();
    assert_eq!(deadweight_loss(&s, &FirmOffer::truthful(&s)).unwrap(), 0.0);
    let priced = apply_distortion(&s, &spec(4.0, 0.0, 0.0, 1.0)).unwrap();
    assert_abs_diff_eq!(deadweight_loss(&s, &priced).unwrap(), 600.0, epsilon = 1e-9);
    // Withholding down to 75 MW leaves the 50 MW dispatch untouched.
    let withheld = apply_distortion(&s, &spec(1.0, 0.0, 0.25, 1.0)).unwrap();
    assert_eq!(deadweight_loss(&s, &withheld).unwrap(), 0.0);
    assert_eq!(
        dispatch_fingerprint(&clear(&s, &withheld).unwrap().dispatch),
        dispatch_fingerprint(&clear(&s, &FirmOffer::truthful(&s)).unwrap().dispatch)
    );
}

#[test]
fn proposed_regime_prefers_truth_on_small_grid() {
    let s = common::twonode();
    let r = best_response_sweep(&s, &RegulatorEstimate::exact(&s), &small_grid()).unwrap();
    assert_eq!(r.points.len(), 12);
    assert!(r.points[r.truthful_index].spec.is_truthful());
    let a = r.argmax(Regime::Proposed);
    assert!(a.ties.contains(&r.truthful_index), "{a:?}");
    assert_abs_diff_eq!(a.best, r.truthful().profit_proposed, epsilon = 1e-6);
    // Every proposed-regime argmax dispatches like the truthful offer.
    for &i in &a.ties {
        let v = r.points[i].values.as_ref().unwrap();
        assert_eq!(v.fingerprint, r.truthful().fingerprint);
    }
}

#[test]
fn unregulated_regime_rewards_distortion_on_congested_case() {
    let s = common::twonode();
    let r = best_response_sweep(&s, &RegulatorEstimate::exact(&s), &small_grid()).unwrap();
    let a = r.argmax(Regime::None);
    assert!(!a.ties.contains(&r.truthful_index));
    assert!(a.best > r.truthful().profit_unregulated + 1.0, "{a:?}");
    // At α = 2 the line still binds and g1 sets n1's price with its own
    // offer of 20: 20 × 50 − 10 × 50 = 500.
    let doubled = r
        .points
        .iter()
        .find(|p| p.spec == spec(2.0, 0.0, 0.0, 1.0))
        .and_then(|p| p.values.as_ref().ok())
        .unwrap();
    assert_abs_diff_eq!(doubled.profit_unregulated, 500.0, epsilon = 1e-6);
    assert!(a.best >= 500.0 - 1e-6);
}

#[test]
fn single_point_grid() {
    let s = common::twonode();
    let r = best_response_sweep(&s, &RegulatorEstimate::exact(&s), &GridSpec::truthful_only()).unwrap();
    for regime in Regime::ALL {
        assert_eq!(r.argmax(regime).ties, vec![0]);
    }
}

#[test]
fn grid_without_truth_is_rejected() {
    let s = common::twonode();
    let mut g = small_grid();
    g.price_scales = vec![2.0];
    assert!(best_response_sweep(&s, &RegulatorEstimate::exact(&s), &g).is_err());
}

#[test]
fn infeasible_points_are_recorded_not_fatal() {
    let s = common::fivenode();
    let g = GridSpec {
        price_scales: vec![1.0],
        price_adds: vec![0.0],
        withholds: vec![0.0, 0.95],
        ramp_scales: vec![1.0],
    };
    let r = best_response_sweep(&s, &RegulatorEstimate::exact(&s), &g).unwrap();
    assert!(r.points[0].values.is_ok());
    assert!(r.points[1].values.is_err());
}

#[test]
fn argmax_set_does_not_depend_on_the_estimate() {
    let s = common::twonode();
    let estimates = [
        RegulatorEstimate::exact(&s),
        RegulatorEstimate::map_units(&s, |_, u| u.curve = OfferCurve::flat(100.0, 13.0)),
        RegulatorEstimate::map_units(&s, |_, u| u.params.p_max = 60.0),
    ];
    let sets: Vec<Vec<usize>> = estimates
        .iter()
        .map(|e| best_response_sweep(&s, e, &small_grid()).unwrap().argmax(Regime::Proposed).ties.clone())
        .collect();
    assert!(sets.windows(2).all(|w| w[0] == w[1]), "{sets:?}");
}

#[test]
fn sweep_is_deterministic() {
    let s = common::fivenode();
    let g = GridSpec {
        price_scales: vec![0.5, 1.0, 2.0],
        price_adds: vec![-5.0, 0.0],
        withholds: vec![0.0, 0.3],
        ramp_scales: vec![0.5, 1.0],
    };
    let e = RegulatorEstimate::exact(&s);
    assert_eq!(best_response_sweep(&s, &e, &g).unwrap(), best_response_sweep(&s, &e, &g).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn deadweight_loss_is_nonnegative(
        scale in 0.0f64..4.0,
        add in -10.0f64..10.0,
        withhold in 0.0f64..0.8,
        ramp in 0.3f64..1.0,
    ) {
        for s in [common::twonode(), common::fivenode()] {
            if let Ok(offer) = apply_distortion(&s, &spec(scale, add, withhold, ramp)) {
                if let Ok(dwl) = deadweight_loss(&s, &offer) {
                    prop_assert!(dwl >= -1e-6, "{}", dwl);
                }
            }
        }
    }
}
