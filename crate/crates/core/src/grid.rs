//! Scenario data model and DC network sensitivities.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::market;

pub type NodeId = String;
pub type UnitId = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    /// Per-unit susceptance.
    pub susceptance: f64,
    /// Thermal limit in MW, applied in both directions.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<NodeId>,
    pub lines: Vec<Line>,
    pub reference: NodeId,
}

impl Network {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    fn index_map(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    }
}

/// Technical limits of a generating unit. All quantities in MW (ramps per hour).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechParams {
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Output in the hour before the horizon starts.
    pub p_initial: f64,
}

impl TechParams {
    /// Checks the hourly bounds and ramp limits of a single-unit schedule.
    pub fn admits(&self, schedule: &[f64], tol: f64) -> bool {
        let mut previous = self.p_initial;
        for &p in schedule {
            if p < self.p_min - tol || p > self.p_max + tol {
                return false;
            }
            if p - previous > self.ramp_up + tol || previous - p > self.ramp_down + tol {
                return false;
            }
            previous = p;
        }
        true
    }

    fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let fields = [
            ("p_min", self.p_min),
            ("p_max", self.p_max),
            ("ramp_up", self.ramp_up),
            ("ramp_down", self.ramp_down),
            ("p_initial", self.p_initial),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                out.push(Violation::new(format!("{path}.{name}"), "must be finite"));
            }
        }
        if self.p_min < 0.0 {
            out.push(Violation::new(format!("{path}.p_min"), "must be non-negative"));
        }
        if self.p_min > self.p_max {
            out.push(Violation::new(
                format!("{path}.p_min"),
                format!("p_min {} exceeds p_max {}", self.p_min, self.p_max),
            ));
        }
        if self.ramp_up < 0.0 {
            out.push(Violation::new(format!("{path}.ramp_up"), "must be non-negative"));
        }
        if self.ramp_down < 0.0 {
            out.push(Violation::new(format!("{path}.ramp_down"), "must be non-negative"));
        }
        if self.p_initial < 0.0 {
            out.push(Violation::new(format!("{path}.p_initial"), "must be non-negative"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfferBlock {
    #[serde(rename = "mw")]
    pub quantity: f64,
    pub price: f64,
}

/// Convex staircase offer: block prices are nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OfferCurve {
    pub blocks: Vec<OfferBlock>,
}

impl OfferCurve {
    pub fn new(blocks: Vec<OfferBlock>) -> Self {
        Self { blocks }
    }

    pub fn flat(quantity: f64, price: f64) -> Self {
        Self::new(vec![OfferBlock { quantity, price }])
    }

    pub fn total_quantity(&self) -> f64 {
        self.blocks.iter().map(|b| b.quantity).sum()
    }

    /// Area under the staircase from 0 to `output`. Output beyond the last
    /// block is priced at the last block's price.
    pub fn cost(&self, output: f64) -> f64 {
        let mut remaining = output;
        let mut cost = 0.0;
        for b in &self.blocks {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(b.quantity);
            cost += take * b.price;
            remaining -= take;
        }
        if remaining > 0.0 {
            if let Some(last) = self.blocks.last() {
                cost += remaining * last.price;
            }
        }
        cost
    }

    /// Splits `output` over the blocks cheapest-first.
    pub fn fill(&self, output: f64) -> Vec<f64> {
        let mut remaining = output.max(0.0);
        self.blocks
            .iter()
            .map(|b| {
                let take = remaining.min(b.quantity);
                remaining -= take;
                take
            })
            .collect()
    }

    fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.blocks.is_empty() {
            out.push(Violation::new(path, "offer curve has no blocks"));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if !(b.quantity > 0.0) || !b.quantity.is_finite() {
                out.push(Violation::new(format!("{path}[{k}].mw"), "block quantity must be positive"));
            }
            if !b.price.is_finite() {
                out.push(Violation::new(format!("{path}[{k}].price"), "must be finite"));
            }
        }
        for (k, w) in self.blocks.windows(2).enumerate() {
            if w[1].price < w[0].price {
                out.push(Violation::new(
                    format!("{path}[{}].price", k + 1),
                    "block prices must be nondecreasing",
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Firm,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratingUnit {
    pub id: UnitId,
    pub node: NodeId,
    pub owner: Owner,
    #[serde(rename = "params")]
    pub true_params: TechParams,
    #[serde(rename = "curve")]
    pub true_curve: OfferCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandBlock {
    #[serde(rename = "mw")]
    pub quantity: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandHour {
    Fixed(f64),
    Blocks(Vec<DemandBlock>),
}

impl DemandHour {
    pub fn capability(&self) -> f64 {
        match self {
            DemandHour::Fixed(q) => *q,
            DemandHour::Blocks(bs) => bs.iter().map(|b| b.quantity).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandBid {
    pub node: NodeId,
    pub hours: Vec<DemandHour>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub units: Vec<GeneratingUnit>,
    pub demands: Vec<DemandBid>,
    pub hours: usize,
    pub firm_unit_ids: Vec<UnitId>,
}

impl Scenario {
    pub fn unit(&self, id: &str) -> Option<&GeneratingUnit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn firm_units(&self) -> impl Iterator<Item = &GeneratingUnit> {
        self.units.iter().filter(|u| u.owner == Owner::Firm)
    }
}

/// Claimed parameters and offer curve for one firm unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitOffer {
    pub params: TechParams,
    pub curve: OfferCurve,
}

/// The firm's submission, keyed by unit id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FirmOffer {
    pub units: BTreeMap<UnitId, UnitOffer>,
}

impl FirmOffer {
    /// The offer that discloses true costs and parameters.
    pub fn truthful(s: &Scenario) -> Self {
        let units = s
            .firm_units()
            .map(|u| {
                (
                    u.id.clone(),
                    UnitOffer {
                        params: u.true_params,
                        curve: u.true_curve.clone(),
                    },
                )
            })
            .collect();
        Self { units }
    }

    pub fn get(&self, id: &str) -> Option<&UnitOffer> {
        self.units.get(id)
    }

    /// Checks that the offer covers exactly the scenario's firm units.
    pub fn check_units(&self, s: &Scenario) -> Result<()> {
        let expected: BTreeSet<&str> = s.firm_units().map(|u| u.id.as_str()).collect();
        let got: BTreeSet<&str> = self.units.keys().map(String::as_str).collect();
        if expected != got {
            let missing: Vec<_> = expected.difference(&got).collect();
            let extra: Vec<_> = got.difference(&expected).collect();
            return Err(Error::OfferMismatch(format!(
                "missing {missing:?}, unexpected {extra:?}"
            )));
        }
        for (id, offer) in &self.units {
            let v = offer.curve.violations(&format!("offer.{id}.curve"));
            let mut v2 = offer.params.violations(&format!("offer.{id}.params"));
            if !v.is_empty() || !v2.is_empty() {
                v2.extend(v);
                return Err(Error::InvalidScenario(v2));
            }
        }
        Ok(())
    }
}

/// Line-by-node flow sensitivities, `ptdf[line][node]`.
pub type Ptdf = Vec<Vec<f64>>;

/// Flow change on each line per MW injected at each node and withdrawn at
/// the reference node, from the DC (lossless, flat-voltage) approximation.
pub fn compute_ptdf(network: &Network) -> Result<Ptdf> {
    let index = network.index_map();
    let n = network.nodes.len();
    let reference = *index.get(network.reference.as_str()).ok_or_else(|| {
        Error::InvalidScenario(vec![Violation::new(
            "network.reference",
            format!("reference node {:?} is not a network node", network.reference),
        )])
    })?;
    let mut ends = Vec::with_capacity(network.lines.len());
    for (l, line) in network.lines.iter().enumerate() {
        let (Some(&f), Some(&t)) = (index.get(line.from.as_str()), index.get(line.to.as_str())) else {
            return Err(Error::InvalidScenario(vec![Violation::new(
                format!("network.lines[{l}]"),
                "line endpoint is not a network node",
            )]));
        };
        ends.push((f, t));
    }

    let unreachable = unreachable_nodes(n, reference, &ends);
    if !unreachable.is_empty() {
        return Err(Error::Disconnected {
            unreachable: unreachable
                .into_iter()
                .map(|i| network.nodes[i].clone())
                .collect(),
        });
    }

    // Reduced susceptance matrix without the reference row/column.
    let reduced = |i: usize| if i < reference { i } else { i - 1 };
    let k = n - 1;
    let mut b = DMatrix::<f64>::zeros(k, k);
    for (line, &(f, t)) in network.lines.iter().zip(&ends) {
        let s = line.susceptance;
        for (a, c) in [(f, t), (t, f)] {
            if a != reference {
                b[(reduced(a), reduced(a))] += s;
                if c != reference {
                    b[(reduced(a), reduced(c))] -= s;
                }
            }
        }
    }
    let x = if k > 0 {
        b.try_inverse().ok_or_else(|| {
            Error::InvalidScenario(vec![Violation::new(
                "network.lines",
                "susceptance matrix is singular",
            )])
        })?
    } else {
        DMatrix::zeros(0, 0)
    };
    let angle = |node: usize, inj: usize| -> f64 {
        if node == reference || inj == reference {
            0.0
        } else {
            x[(reduced(node), reduced(inj))]
        }
    };

    Ok(network
        .lines
        .iter()
        .zip(&ends)
        .map(|(line, &(f, t))| {
            (0..n)
                .map(|j| {
                    let v = line.susceptance * (angle(f, j) - angle(t, j));
                    if v.abs() < 1e-12 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect())
}

fn unreachable_nodes(n: usize, start: usize, ends: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(f, t) in ends {
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

/// Sufficient componentwise test that every schedule admitted by `claimed`
/// is also admitted by `truth`.
pub fn is_within_true_envelope(claimed: &TechParams, truth: &TechParams) -> bool {
    claimed.p_min >= truth.p_min
        && claimed.p_max <= truth.p_max
        && claimed.ramp_up <= truth.ramp_up
        && claimed.ramp_down <= truth.ramp_down
        && claimed.p_initial == truth.p_initial
}

/// Checks every structural invariant and then probes feasibility with one
/// truthful clearing run.
pub fn validate_scenario(s: &Scenario) -> std::result::Result<(), Vec<Violation>> {
    let mut v = structural_violations(s);
    if v.is_empty() {
        match market::clear(s, &FirmOffer::truthful(s)) {
            Ok(_) => {}
            Err(Error::Infeasible { detail, .. }) => v.push(Violation::new(
                "scenario",
                format!("no feasible dispatch exists: {detail}"),
            )),
            Err(e) => v.push(Violation::new("scenario", e.to_string())),
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn structural_violations(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();
    let net = &s.network;
    if net.nodes.is_empty() {
        v.push(Violation::new("network.nodes", "at least one node is required"));
    }
    let mut seen = BTreeSet::new();
    for (i, n) in net.nodes.iter().enumerate() {
        if !seen.insert(n) {
            v.push(Violation::new(format!("network.nodes[{i}]"), format!("duplicate node {n:?}")));
        }
    }
    if net.node_index(&net.reference).is_none() {
        v.push(Violation::new(
            "network.reference",
            format!("reference node {:?} is not a network node", net.reference),
        ));
    }
    let mut lines_ok = true;
    for (l, line) in net.lines.iter().enumerate() {
        let path = format!("network.lines[{l}]");
        for (field, id) in [("from", &line.from), ("to", &line.to)] {
            if net.node_index(id).is_none() {
                lines_ok = false;
                v.push(Violation::new(format!("{path}.{field}"), format!("unknown node {id:?}")));
            }
        }
        if line.from == line.to {
            lines_ok = false;
            v.push(Violation::new(path.clone(), "self-loop line"));
        }
        if !(line.susceptance > 0.0) || !line.susceptance.is_finite() {
            lines_ok = false;
            v.push(Violation::new(format!("{path}.susceptance"), "must be positive"));
        }
        if !(line.capacity >= 0.0) || !line.capacity.is_finite() {
            v.push(Violation::new(format!("{path}.capacity"), "must be non-negative"));
        }
    }
    if lines_ok && net.node_index(&net.reference).is_some() && seen.len() == net.nodes.len() {
        if let Err(Error::Disconnected { unreachable }) = compute_ptdf(net) {
            v.push(Violation::new(
                "network.lines",
                format!("network is disconnected; unreachable: {}", unreachable.join(", ")),
            ));
        }
    }

    if s.hours == 0 {
        v.push(Violation::new("hours", "at least one hour is required"));
    }

    let mut unit_ids = BTreeSet::new();
    for (k, u) in s.units.iter().enumerate() {
        let path = format!("units[{k}]");
        if !unit_ids.insert(u.id.as_str()) {
            v.push(Violation::new(format!("{path}.id"), format!("duplicate unit id {:?}", u.id)));
        }
        if net.node_index(&u.node).is_none() {
            v.push(Violation::new(format!("{path}.node"), format!("unknown node {:?}", u.node)));
        }
        v.extend(u.true_params.violations(&format!("{path}.params")));
        v.extend(u.true_curve.violations(&format!("{path}.curve")));
        if u.true_curve.total_quantity() < u.true_params.p_max {
            v.push(Violation::new(
                format!("{path}.curve"),
                format!(
                    "curve covers {} MW but p_max is {}",
                    u.true_curve.total_quantity(),
                    u.true_params.p_max
                ),
            ));
        }
    }
    let owned: BTreeSet<&str> = s.firm_units().map(|u| u.id.as_str()).collect();
    let listed: BTreeSet<&str> = s.firm_unit_ids.iter().map(String::as_str).collect();
    if owned != listed {
        v.push(Violation::new(
            "firm_units",
            format!("firm unit list {listed:?} does not match firm-owned units {owned:?}"),
        ));
    }
    if owned.is_empty() {
        v.push(Violation::new("units", "at least one firm unit is required"));
    }
    if !s.units.iter().any(|u| u.owner == Owner::Other) {
        v.push(Violation::new("units", "at least one other-owned unit is required"));
    }

    for (d, bid) in s.demands.iter().enumerate() {
        let path = format!("demands[{d}]");
        if net.node_index(&bid.node).is_none() {
            v.push(Violation::new(format!("{path}.node"), format!("unknown node {:?}", bid.node)));
        }
        if bid.hours.len() != s.hours {
            v.push(Violation::new(
                format!("{path}.hours"),
                format!("{} entries for {} hours", bid.hours.len(), s.hours),
            ));
        }
        for (h, entry) in bid.hours.iter().enumerate() {
            let hp = format!("{path}.hours[{h}]");
            match entry {
                DemandHour::Fixed(q) => {
                    if !(*q >= 0.0) || !q.is_finite() {
                        v.push(Violation::new(format!("{hp}.fixed"), "must be non-negative"));
                    }
                }
                DemandHour::Blocks(blocks) => {
                    for (k, b) in blocks.iter().enumerate() {
                        if !(b.quantity > 0.0) || !b.quantity.is_finite() {
                            v.push(Violation::new(
                                format!("{hp}.blocks[{k}].mw"),
                                "block quantity must be positive",
                            ));
                        }
                        if !b.value.is_finite() {
                            v.push(Violation::new(format!("{hp}.blocks[{k}].value"), "must be finite"));
                        }
                    }
                    for (k, w) in blocks.windows(2).enumerate() {
                        if w[1].value > w[0].value {
                            v.push(Violation::new(
                                format!("{hp}.blocks[{}].value", k + 1),
                                "block values must be nonincreasing",
                            ));
                        }
                    }
                }
            }
        }
    }
    for h in 0..s.hours {
        let total: f64 = s
            .demands
            .iter()
            .filter_map(|d| d.hours.get(h))
            .map(DemandHour::capability)
            .sum();
        if !(total > 0.0) {
            v.push(Violation::new(
                format!("demands.hours[{h}]"),
                "no positive demand in this hour",
            ));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(from: &str, to: &str, susceptance: f64) -> Line {
        Line {
            from: from.into(),
            to: to.into(),
            susceptance,
            capacity: 100.0,
        }
    }

    fn net(nodes: &[&str], lines: Vec<Line>) -> Network {
        Network {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            lines,
            reference: nodes[0].into(),
        }
    }

    #[test]
    fn two_node_ptdf() {
        let p = compute_ptdf(&net(&["n1", "n2"], vec![line("n1", "n2", 1.0)])).unwrap();
        assert_eq!(p, vec![vec![0.0, -1.0]]);
    }

    #[test]
    fn triangle_ptdf() {
        // Reduced system [[2,-1],[-1,2]] θ = e_2 → θ = (1/3, 2/3); flow n1→n2 = 0 - 2/3.
        let p = compute_ptdf(&net(
            &["n1", "n2", "n3"],
            vec![line("n1", "n2", 1.0), line("n2", "n3", 1.0), line("n1", "n3", 1.0)],
        ))
        .unwrap();
        assert_abs_diff_eq!(p[0][1], -2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1][1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2][1], -1.0 / 3.0, epsilon = 1e-12);
        for row in &p {
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn radial_ptdf_is_signed_incidence() {
        // n1 - n2 - n3, n2 - n4.
        let p = compute_ptdf(&net(
            &["n1", "n2", "n3", "n4"],
            vec![line("n1", "n2", 3.0), line("n2", "n3", 0.5), line("n2", "n4", 7.0)],
        ))
        .unwrap();
        let expected = [
            [0.0, -1.0, -1.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ];
        for (row, want) in p.iter().zip(expected) {
            for (&a, b) in row.iter().zip(want) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn disconnected_network_names_component() {
        let err = compute_ptdf(&net(
            &["n1", "n2", "n3", "n4"],
            vec![line("n1", "n2", 1.0), line("n3", "n4", 1.0)],
        ))
        .unwrap_err();
        match err {
            Error::Disconnected { unreachable } => assert_eq!(unreachable, vec!["n3", "n4"]),
            other => panic!("unexpected {other}"),
        }
    }

    fn params(p_min: f64, p_max: f64, ramp: f64) -> TechParams {
        TechParams {
            p_min,
            p_max,
            ramp_up: ramp,
            ramp_down: ramp,
            p_initial: 0.0,
        }
    }

    #[test]
    fn envelope_membership() {
        let truth = params(0.0, 100.0, 50.0);
        assert!(is_within_true_envelope(&truth, &truth));
        assert!(!is_within_true_envelope(&params(0.0, 120.0, 50.0), &truth));
        assert!(is_within_true_envelope(&params(10.0, 80.0, 30.0), &truth));
        let mut shifted = truth;
        shifted.p_initial = 5.0;
        assert!(!is_within_true_envelope(&shifted, &truth));
    }

    #[test]
    fn tightened_claim_schedules_are_deliverable() {
        use rand::{Rng, SeedableRng};
        let truth = params(0.0, 100.0, 50.0);
        let claimed = params(10.0, 80.0, 30.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut accepted = 0;
        while accepted < 1000 {
            let schedule: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..=100.0)).collect();
            if claimed.admits(&schedule, 0.0) {
                accepted += 1;
                assert!(truth.admits(&schedule, 0.0), "{schedule:?}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn envelope_is_transitive(
            a in proptest::array::uniform4(0.0f64..100.0),
            b in proptest::array::uniform4(0.0f64..100.0),
            c in proptest::array::uniform4(0.0f64..100.0),
        ) {
            let mk = |v: [f64; 4]| TechParams {
                p_min: v[0].min(v[1]),
                p_max: v[0].max(v[1]),
                ramp_up: v[2],
                ramp_down: v[3],
                p_initial: 0.0,
            };
            let (a, b, c) = (mk(a), mk(b), mk(c));
            if is_within_true_envelope(&a, &b) && is_within_true_envelope(&b, &c) {
                proptest::prop_assert!(is_within_true_envelope(&a, &c));
            }
        }

        #[test]
        fn envelope_claims_admit_only_true_schedules(
            shrink in proptest::array::uniform4(0.0f64..1.0),
            schedule in proptest::collection::vec(0.0f64..120.0, 1..5),
        ) {
            let truth = TechParams { p_min: 5.0, p_max: 100.0, ramp_up: 40.0, ramp_down: 30.0, p_initial: 20.0 };
            let p_max = truth.p_max * (1.0 - 0.5 * shrink[0]);
            let claimed = TechParams {
                p_min: truth.p_min + (p_max - truth.p_min) * shrink[1],
                p_max,
                ramp_up: truth.ramp_up * shrink[2],
                ramp_down: truth.ramp_down * shrink[3],
                p_initial: truth.p_initial,
            };
            proptest::prop_assert!(is_within_true_envelope(&claimed, &truth));
            if claimed.admits(&schedule, 0.0) {
                proptest::prop_assert!(truth.admits(&schedule, 0.0));
            }
        }
    }

    #[test]
    fn staircase_cost_and_fill() {
        let curve = OfferCurve::new(vec![
            OfferBlock { quantity: 50.0, price: 10.0 },
            OfferBlock { quantity: 30.0, price: 20.0 },
        ]);
        assert_eq!(curve.cost(0.0), 0.0);
        assert_eq!(curve.cost(60.0), 700.0);
        assert_eq!(curve.cost(90.0), 1300.0);
        assert_eq!(curve.fill(60.0), vec![50.0, 10.0]);
    }
}
