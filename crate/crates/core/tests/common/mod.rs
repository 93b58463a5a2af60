//! Shared fixtures and oracles for the integration tests.
#![allow(dead_code)]

use damsim_core::grid::{DemandBid, DemandBlock, DemandHour, Line, Network};
use damsim_core::io::{parse_scenario, LoadedScenario};
use damsim_core::lp::{LinearProgram, Relation};
use damsim_core::{FirmSchedule, GeneratingUnit, OfferCurve, Owner, Scenario, TechParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const TWONODE: &str = include_str!("../../../../scenarios/twonode.json");
pub const TWONODE_WIDE: &str = include_str!("../../../../scenarios/twonode-wide.json");
pub const FIVENODE: &str = include_str!("../../../../scenarios/fivenode.json");
pub const POCKET: &str = include_str!("../../../../scenarios/pocket.json");

pub fn load(text: &str) -> LoadedScenario {
    parse_scenario(text).expect("fixture scenario loads")
}

pub fn twonode() -> Scenario {
    load(TWONODE).scenario
}

pub fn twonode_wide() -> Scenario {
    load(TWONODE_WIDE).scenario
}

pub fn fivenode() -> Scenario {
    load(FIVENODE).scenario
}

/// Import-constrained load pocket where the firm owns the cheap local unit.
pub fn pocket() -> Scenario {
    load(POCKET).scenario
}

/// Canonical two-node case with a different line capacity.
pub fn twonode_with_capacity(cap: f64) -> Scenario {
    let mut s = twonode();
    s.network.lines[0].capacity = cap;
    s
}

pub fn sched(pairs: &[(&str, &[f64])]) -> FirmSchedule {
    FirmSchedule {
        units: pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
    }
}

pub fn params(p_max: f64) -> TechParams {
    TechParams {
        p_min: 0.0,
        p_max,
        ramp_up: p_max,
        ramp_down: p_max,
        p_initial: 0.0,
    }
}

pub fn unit(id: &str, node: &str, owner: Owner, p_max: f64, price: f64) -> GeneratingUnit {
    GeneratingUnit {
        id: id.into(),
        node: node.into(),
        owner,
        true_params: params(p_max),
        true_curve: OfferCurve::flat(p_max, price),
    }
}

/// One node, one firm unit (cost 20, 60 MW), a 100 MW demand block valued
/// at 50 and an expensive backstop unit that never runs.
pub fn single_node_elastic() -> Scenario {
    Scenario {
        network: Network {
            nodes: vec!["n".into()],
            lines: vec![],
            reference: "n".into(),
        },
        units: vec![
            unit("g", "n", Owner::Firm, 60.0, 20.0),
            unit("backstop", "n", Owner::Other, 10.0, 80.0),
        ],
        demands: vec![DemandBid {
            node: "n".into(),
            hours: vec![DemandHour::Blocks(vec![DemandBlock {
                quantity: 100.0,
                value: 50.0,
            }])],
        }],
        hours: 1,
        firm_unit_ids: vec!["g".into()],
    }
}

/// Small meshed scenarios for brute-force cross-checks: three nodes, up
/// to four units, one or two hours.
pub fn small_mesh(hours: usize, demand: &[f64], cap: f64) -> Scenario {
    let line = |from: &str, to: &str, b: f64| Line {
        from: from.into(),
        to: to.into(),
        susceptance: b,
        capacity: cap,
    };
    let mut g = unit("g", "a", Owner::Firm, 60.0, 12.0);
    g.true_params.ramp_up = 25.0;
    g.true_params.ramp_down = 25.0;
    g.true_params.p_initial = 20.0;
    Scenario {
        network: Network {
            nodes: vec!["a".into(), "b".into(), "c".into()],
            lines: vec![line("a", "b", 1.0), line("b", "c", 2.0), line("a", "c", 1.0)],
            reference: "a".into(),
        },
        units: vec![
            g,
            unit("h", "b", Owner::Other, 50.0, 20.0),
            unit("k", "c", Owner::Other, 80.0, 35.0),
        ],
        demands: vec![DemandBid {
            node: "c".into(),
            hours: demand[..hours].iter().map(|&d| DemandHour::Fixed(d)).collect(),
        }],
        hours,
        firm_unit_ids: vec!["g".into()],
    }
}

/// Random bounded LP with integer data: up to four columns, three rows.
pub fn random_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=3);
    let objective = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let bounds = (0..n)
        .map(|_| {
            let lo = rng.gen_range(-3..=0) as f64;
            (lo, lo + rng.gen_range(1..=8) as f64)
        })
        .collect();
    let mut lp = LinearProgram::new(objective, bounds);
    for _ in 0..m {
        let coefficients = (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect();
        let relation = if rng.gen_bool(0.25) { Relation::Eq } else { Relation::Le };
        lp.add_row(coefficients, relation, rng.gen_range(-6..=12) as f64);
    }
    lp
}

/// Maximum objective over all vertices of a bounded LP, or `None` when the
/// feasible set is empty. Every vertex is the solution of some n×n system
/// of active constraints (rows or bounds); equality rows are enforced by
/// the feasibility filter rather than forced into the system, since they
/// may be redundant.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    // Each candidate constraint as (coefficients, rhs).
    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &lp.rows {
        candidates.push((row.coefficients.clone(), row.rhs));
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        candidates.push((e.clone(), lo));
        candidates.push((e, hi));
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-9;
        lp.bounds.iter().zip(x).all(|(&(lo, hi), &v)| v >= lo - tol && v <= hi + tol)
            && lp.rows.iter().all(|r| {
                let a: f64 = r.coefficients.iter().zip(x).map(|(c, v)| c * v).sum();
                match r.relation {
                    Relation::Le => a <= r.rhs + tol,
                    Relation::Eq => (a - r.rhs).abs() <= tol,
                }
            })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for subset in combinations(candidates.len(), n) {
        let a = DMatrix::from_fn(n, n, |i, j| candidates[subset[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| candidates[subset[i]].1);
        if a.determinant().abs() < 1e-9 {
            continue;
        }
        let Some(x) = a.lu().solve(&b) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) || !feasible(&x) {
            continue;
        }
        let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, x));
        }
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}
