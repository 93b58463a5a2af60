//! Welfare-maximizing clearing, nodal prices and settlement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RunKind};
use crate::grid::{compute_ptdf, DemandHour, FirmOffer, OfferCurve, Owner, Ptdf, Scenario, TechParams, UnitId};
use crate::lp::{self, LinearProgram, LpStatus, Relation};

/// Slack below which an inequality row is reported as binding.
const BINDING_TOL: f64 = 1e-7;

/// Hourly output of each firm unit, keyed by unit id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmSchedule {
    pub units: BTreeMap<UnitId, Vec<f64>>,
}

impl FirmSchedule {
    pub fn get(&self, id: &str) -> Option<&Vec<f64>> {
        self.units.get(id)
    }

    /// Total MW·h across all units and hours.
    pub fn total(&self) -> f64 {
        self.units.values().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Balance { hour: usize },
    FlowForward { line: usize, hour: usize },
    FlowReverse { line: usize, hour: usize },
    UnitMax { unit: usize, hour: usize },
    UnitMin { unit: usize, hour: usize },
    RampUp { unit: usize, hour: usize },
    RampDown { unit: usize, hour: usize },
}

impl RowKind {
    pub fn is_flow(&self) -> bool {
        matches!(self, RowKind::FlowForward { .. } | RowKind::FlowReverse { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Generation { unit: usize, hour: usize, block: usize },
    Consumption { demand: usize, hour: usize, block: usize },
}

/// Maps LP columns and rows back to scenario entities.
#[derive(Debug, Clone)]
pub struct LpLayout {
    pub vars: Vec<VarKind>,
    pub rows: Vec<RowKind>,
    /// Balance row per hour.
    pub balance_rows: Vec<usize>,
    /// `(forward, reverse)` flow rows, `[line][hour]`.
    pub flow_rows: Vec<Vec<(usize, usize)>>,
    /// Block columns per `[unit][hour]`; empty for pinned firm units.
    pub unit_vars: Vec<Vec<Vec<usize>>>,
    /// Elastic block columns per `[demand][hour]`.
    pub demand_vars: Vec<Vec<Vec<usize>>>,
    pub ptdf: Ptdf,
    pub unit_nodes: Vec<usize>,
    pub demand_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    /// MW per `[unit][hour]`, in scenario unit order.
    pub unit_output: Vec<Vec<f64>>,
    /// MW per `[demand][hour]`, fixed quantities included.
    pub consumption: Vec<Vec<f64>>,
    /// MW per `[line][hour]`, positive in the from→to direction.
    pub flows: Vec<Vec<f64>>,
}

impl Dispatch {
    /// The firm's part of the dispatch (X).
    pub fn firm_schedule(&self, s: &Scenario) -> FirmSchedule {
        FirmSchedule {
            units: s
                .units
                .iter()
                .zip(&self.unit_output)
                .filter(|(u, _)| u.owner == Owner::Firm)
                .map(|(u, out)| (u.id.clone(), out.clone()))
                .collect(),
        }
    }

    /// Everyone else's generation, keyed by unit id.
    pub fn other_schedule(&self, s: &Scenario) -> BTreeMap<UnitId, Vec<f64>> {
        s.units
            .iter()
            .zip(&self.unit_output)
            .filter(|(u, _)| u.owner == Owner::Other)
            .map(|(u, out)| (u.id.clone(), out.clone()))
            .collect()
    }

    /// All outputs, consumptions and flows in one vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.unit_output
            .iter()
            .chain(&self.consumption)
            .chain(&self.flows)
            .flatten()
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    pub dispatch: Dispatch,
    /// Money/MWh per `[node][hour]`.
    pub lmp: Vec<Vec<f64>>,
    /// Optimal LP objective. For a restricted clear this is `u_other`.
    pub objective: f64,
    /// Consumption value minus other units' offered cost.
    pub u_other: f64,
    /// Firm output priced by the submitted curves.
    pub firm_offered_cost: f64,
    /// Firm output priced by the true curves.
    pub firm_true_cost: f64,
    pub binding_rows: Vec<RowKind>,
    pub balance_duals: Vec<f64>,
    /// `(forward, reverse)` flow-row duals, `[line][hour]`.
    pub flow_duals: Vec<Vec<(f64, f64)>>,
}

impl ClearingResult {
    /// Welfare with the firm's output priced at true cost.
    pub fn true_welfare(&self) -> f64 {
        self.u_other - self.firm_true_cost
    }

    /// LMP revenue of the firm's units.
    pub fn firm_lmp_revenue(&self, s: &Scenario) -> f64 {
        unit_revenues(s, self)
            .into_iter()
            .zip(&s.units)
            .filter(|(_, u)| u.owner == Owner::Firm)
            .map(|(r, _)| r)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settlement {
    /// LMP payment per demand bid.
    pub load_payments: Vec<f64>,
    /// LMP receipt per unit, scenario order.
    pub generator_receipts: Vec<f64>,
    pub congestion_rent: f64,
}

impl Settlement {
    pub fn total_load_payments(&self) -> f64 {
        self.load_payments.iter().sum()
    }

    pub fn total_generator_receipts(&self) -> f64 {
        self.generator_receipts.iter().sum()
    }
}

enum FirmSide<'a> {
    Offer(&'a FirmOffer),
    Pinned(&'a FirmSchedule),
}

/// Builds the clearing LP for a firm offer.
pub fn assemble_lp(s: &Scenario, offer: &FirmOffer) -> Result<(LinearProgram, LpLayout)> {
    offer.check_units(s)?;
    build(s, FirmSide::Offer(offer))
}

/// Builds the clearing LP with the firm's output held at `fixed`; the
/// objective then contains only consumption value and other units' costs.
pub fn assemble_restricted_lp(s: &Scenario, fixed: &FirmSchedule) -> Result<(LinearProgram, LpLayout)> {
    build(s, FirmSide::Pinned(fixed))
}

fn build(s: &Scenario, firm: FirmSide<'_>) -> Result<(LinearProgram, LpLayout)> {
    let ptdf = compute_ptdf(&s.network)?;
    let hours = s.hours;
    let node_of = |id: &str| {
        s.network
            .node_index(id)
            .ok_or_else(|| Error::OfferMismatch(format!("unknown node {id:?}")))
    };
    let unit_nodes = s.units.iter().map(|u| node_of(&u.node)).collect::<Result<Vec<_>>>()?;
    let demand_nodes = s.demands.iter().map(|d| node_of(&d.node)).collect::<Result<Vec<_>>>()?;
    let n_nodes = s.network.nodes.len();

    let mut objective = Vec::new();
    let mut bounds = Vec::new();
    let mut vars = Vec::new();
    let mut unit_vars = vec![vec![Vec::new(); hours]; s.units.len()];
    let mut unit_limits: Vec<Option<TechParams>> = Vec::with_capacity(s.units.len());
    // Fixed injections (pinned firm output minus fixed demand) per [node][hour].
    let mut fixed_injection = vec![vec![0.0; hours]; n_nodes];

    for (k, unit) in s.units.iter().enumerate() {
        let (params, curve): (TechParams, &OfferCurve) = match (&firm, unit.owner) {
            (_, Owner::Other) => (unit.true_params, &unit.true_curve),
            (FirmSide::Offer(offer), Owner::Firm) => {
                let o = offer
                    .get(&unit.id)
                    .ok_or_else(|| Error::OfferMismatch(format!("no offer for {}", unit.id)))?;
                (o.params, &o.curve)
            }
            (FirmSide::Pinned(fixed), Owner::Firm) => {
                let sched = fixed
                    .get(&unit.id)
                    .ok_or_else(|| Error::OfferMismatch(format!("no fixed schedule for {}", unit.id)))?;
                if sched.len() != hours {
                    return Err(Error::OfferMismatch(format!(
                        "fixed schedule for {} has {} hours, expected {hours}",
                        unit.id,
                        sched.len()
                    )));
                }
                for (h, &p) in sched.iter().enumerate() {
                    fixed_injection[unit_nodes[k]][h] += p;
                }
                unit_limits.push(None);
                continue;
            }
        };
        for h in 0..hours {
            for (b, block) in curve.blocks.iter().enumerate() {
                unit_vars[k][h].push(vars.len());
                vars.push(VarKind::Generation { unit: k, hour: h, block: b });
                objective.push(-block.price);
                bounds.push((0.0, block.quantity));
            }
        }
        unit_limits.push(Some(params));
    }

    let mut demand_vars = vec![vec![Vec::new(); hours]; s.demands.len()];
    for (d, bid) in s.demands.iter().enumerate() {
        for (h, entry) in bid.hours.iter().enumerate().take(hours) {
            match entry {
                DemandHour::Fixed(q) => fixed_injection[demand_nodes[d]][h] -= q,
                DemandHour::Blocks(blocks) => {
                    for (b, block) in blocks.iter().enumerate() {
                        demand_vars[d][h].push(vars.len());
                        vars.push(VarKind::Consumption { demand: d, hour: h, block: b });
                        objective.push(block.value);
                        bounds.push((0.0, block.quantity));
                    }
                }
            }
        }
    }

    let n = vars.len();
    let mut lp = LinearProgram::new(objective, bounds);
    let mut rows = Vec::new();
    let var_node = |v: &VarKind| match *v {
        VarKind::Generation { unit, .. } => (unit_nodes[unit], 1.0),
        VarKind::Consumption { demand, .. } => (demand_nodes[demand], -1.0),
    };
    let var_hour = |v: &VarKind| match *v {
        VarKind::Generation { hour, .. } | VarKind::Consumption { hour, .. } => hour,
    };

    // Balance: elastic consumption − variable generation = fixed injection total.
    let mut balance_rows = Vec::with_capacity(hours);
    for h in 0..hours {
        let mut a = vec![0.0; n];
        for (j, v) in vars.iter().enumerate() {
            if var_hour(v) == h {
                a[j] = -var_node(v).1;
            }
        }
        let rhs: f64 = fixed_injection.iter().map(|row| row[h]).sum();
        balance_rows.push(lp.add_row(a, Relation::Eq, rhs));
        rows.push(RowKind::Balance { hour: h });
    }

    let mut flow_rows = vec![Vec::with_capacity(hours); s.network.lines.len()];
    for (l, line) in s.network.lines.iter().enumerate() {
        for h in 0..hours {
            let mut a = vec![0.0; n];
            for (j, v) in vars.iter().enumerate() {
                if var_hour(v) == h {
                    let (node, sign) = var_node(v);
                    a[j] = sign * ptdf[l][node];
                }
            }
            let base: f64 = (0..n_nodes).map(|i| ptdf[l][i] * fixed_injection[i][h]).sum();
            let neg: Vec<f64> = a.iter().map(|x| -x).collect();
            let fwd = lp.add_row(a, Relation::Le, line.capacity - base);
            rows.push(RowKind::FlowForward { line: l, hour: h });
            let rev = lp.add_row(neg, Relation::Le, line.capacity + base);
            rows.push(RowKind::FlowReverse { line: l, hour: h });
            flow_rows[l].push((fwd, rev));
        }
    }

    for (k, limits) in unit_limits.iter().enumerate() {
        let Some(p) = limits else { continue };
        let output_row = |h: usize, sign: f64| {
            let mut a = vec![0.0; n];
            for &j in &unit_vars[k][h] {
                a[j] = sign;
            }
            a
        };
        for h in 0..hours {
            lp.add_row(output_row(h, 1.0), Relation::Le, p.p_max);
            rows.push(RowKind::UnitMax { unit: k, hour: h });
            lp.add_row(output_row(h, -1.0), Relation::Le, -p.p_min);
            rows.push(RowKind::UnitMin { unit: k, hour: h });

            let mut up = output_row(h, 1.0);
            let mut down = output_row(h, -1.0);
            let (up_rhs, down_rhs) = if h == 0 {
                (p.ramp_up + p.p_initial, p.ramp_down - p.p_initial)
            } else {
                for &j in &unit_vars[k][h - 1] {
                    up[j] = -1.0;
                    down[j] = 1.0;
                }
                (p.ramp_up, p.ramp_down)
            };
            lp.add_row(up, Relation::Le, up_rhs);
            rows.push(RowKind::RampUp { unit: k, hour: h });
            lp.add_row(down, Relation::Le, down_rhs);
            rows.push(RowKind::RampDown { unit: k, hour: h });
        }
    }

    let layout = LpLayout {
        vars,
        rows,
        balance_rows,
        flow_rows,
        unit_vars,
        demand_vars,
        ptdf,
        unit_nodes,
        demand_nodes,
    };
    Ok((lp, layout))
}

/// `LMP[n][h] = balance_dual[h] − Σ_l (fwd_dual − rev_dual)[l][h] · PTDF[l][n]`.
pub fn lmp_from_duals(ptdf: &Ptdf, balance_duals: &[f64], flow_duals: &[Vec<(f64, f64)>], n_nodes: usize) -> Vec<Vec<f64>> {
    (0..n_nodes)
        .map(|n| {
            balance_duals
                .iter()
                .enumerate()
                .map(|(h, &energy)| {
                    let mut price = energy;
                    for (l, duals) in flow_duals.iter().enumerate() {
                        let (fwd, rev) = duals[h];
                        price -= (fwd - rev) * ptdf[l][n];
                    }
                    price
                })
                .collect()
        })
        .collect()
}

/// Clears the market with the firm's submitted offer.
pub fn clear(s: &Scenario, offer: &FirmOffer) -> Result<ClearingResult> {
    clear_as(s, offer, RunKind::Base)
}

pub(crate) fn clear_as(s: &Scenario, offer: &FirmOffer, run: RunKind) -> Result<ClearingResult> {
    let (lp, layout) = assemble_lp(s, offer)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible {
                run,
                detail: infeasibility_detail(s, Some(offer), None),
            })
        }
        // Every column is bounded by its block size.
        LpStatus::Unbounded => return Err(Error::Unbounded { run }),
    }
    Ok(extract(s, &lp, &layout, &sol))
}

/// Clears with the firm's output pinned to `fixed`. The reported objective
/// is the best attainable consumption value minus other units' costs.
pub fn restricted_clear(s: &Scenario, offer: &FirmOffer, fixed: &FirmSchedule) -> Result<ClearingResult> {
    offer.check_units(s)?;
    for u in s.firm_units() {
        let claimed = &offer.get(&u.id).expect("checked above").params;
        let sched = fixed
            .get(&u.id)
            .ok_or_else(|| Error::OfferMismatch(format!("no fixed schedule for {}", u.id)))?;
        if sched.len() != s.hours {
            return Err(Error::OfferMismatch(format!(
                "fixed schedule for {} has {} hours, expected {}",
                u.id,
                sched.len(),
                s.hours
            )));
        }
        if !claimed.admits(sched, lp::FEASIBILITY_TOL) {
            return Err(Error::OutsideClaimedEnvelope(format!("unit {} schedule {sched:?}", u.id)));
        }
    }
    if fixed.units.len() != s.firm_unit_ids.len() {
        return Err(Error::OfferMismatch("fixed schedule lists non-firm units".into()));
    }

    let (lp, layout) = assemble_restricted_lp(s, fixed)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible {
                run: RunKind::Restricted,
                detail: infeasibility_detail(s, None, Some(fixed)),
            })
        }
        LpStatus::Unbounded => return Err(Error::Unbounded { run: RunKind::Restricted }),
    }
    let mut result = extract(s, &lp, &layout, &sol);
    // Pinned outputs are not LP columns; copy them into the dispatch.
    for (k, u) in s.units.iter().enumerate() {
        if let Some(sched) = fixed.get(&u.id) {
            result.dispatch.unit_output[k] = sched.clone();
        }
    }
    result.firm_offered_cost = firm_cost(s, &result.dispatch, |id| offer.get(id).map(|o| &o.curve));
    result.firm_true_cost = firm_cost(s, &result.dispatch, |id| s.unit(id).map(|u| &u.true_curve));
    result.dispatch.flows = flows(s, &layout, &result.dispatch);
    Ok(result)
}

fn firm_cost<'a>(s: &'a Scenario, dispatch: &Dispatch, curve: impl Fn(&str) -> Option<&'a OfferCurve>) -> f64 {
    s.units
        .iter()
        .zip(&dispatch.unit_output)
        .filter(|(u, _)| u.owner == Owner::Firm)
        .map(|(u, out)| {
            curve(&u.id)
                .map(|c| out.iter().map(|&p| c.cost(p)).sum::<f64>())
                .unwrap_or(0.0)
        })
        .sum()
}

fn extract(
    s: &Scenario,
    lp: &LinearProgram,
    layout: &LpLayout,
    sol: &lp::LpSolution,
) -> ClearingResult {
    let hours = s.hours;
    let x = &sol.primal;
    let mut unit_output = vec![vec![0.0; hours]; s.units.len()];
    for (k, per_hour) in layout.unit_vars.iter().enumerate() {
        for (h, cols) in per_hour.iter().enumerate() {
            unit_output[k][h] = cols.iter().map(|&j| x[j]).sum();
        }
    }
    let mut consumption = vec![vec![0.0; hours]; s.demands.len()];
    for (d, bid) in s.demands.iter().enumerate() {
        for h in 0..hours {
            consumption[d][h] = match &bid.hours[h] {
                DemandHour::Fixed(q) => *q,
                DemandHour::Blocks(_) => layout.demand_vars[d][h].iter().map(|&j| x[j]).sum(),
            };
        }
    }

    let mut u_other = 0.0;
    let mut firm_offered_cost = 0.0;
    for (j, v) in layout.vars.iter().enumerate() {
        let contribution = lp.objective[j] * x[j];
        match *v {
            VarKind::Generation { unit, .. } if s.units[unit].owner == Owner::Firm => {
                firm_offered_cost -= contribution;
            }
            _ => u_other += contribution,
        }
    }

    let balance_duals: Vec<f64> = layout.balance_rows.iter().map(|&r| sol.row_duals[r]).collect();
    let flow_duals: Vec<Vec<(f64, f64)>> = layout
        .flow_rows
        .iter()
        .map(|per_hour| {
            per_hour
                .iter()
                .map(|&(f, r)| (sol.row_duals[f], sol.row_duals[r]))
                .collect()
        })
        .collect();
    let lmp = lmp_from_duals(&layout.ptdf, &balance_duals, &flow_duals, s.network.nodes.len());

    let activities = lp.activities(x);
    let binding_rows = lp
        .rows
        .iter()
        .zip(&activities)
        .zip(&layout.rows)
        .filter(|((row, act), _)| row.relation == Relation::Le && row.rhs - **act <= BINDING_TOL)
        .map(|(_, kind)| *kind)
        .collect();

    let mut dispatch = Dispatch {
        unit_output,
        consumption,
        flows: Vec::new(),
    };
    dispatch.flows = flows(s, layout, &dispatch);
    let firm_true_cost = firm_cost(s, &dispatch, |id| s.unit(id).map(|u| &u.true_curve));

    ClearingResult {
        dispatch,
        lmp,
        objective: sol.objective_value,
        u_other,
        firm_offered_cost,
        firm_true_cost,
        binding_rows,
        balance_duals,
        flow_duals,
    }
}

fn flows(s: &Scenario, layout: &LpLayout, dispatch: &Dispatch) -> Vec<Vec<f64>> {
    let n_nodes = s.network.nodes.len();
    let mut injection = vec![vec![0.0; s.hours]; n_nodes];
    for (k, out) in dispatch.unit_output.iter().enumerate() {
        for (h, &p) in out.iter().enumerate() {
            injection[layout.unit_nodes[k]][h] += p;
        }
    }
    for (d, cons) in dispatch.consumption.iter().enumerate() {
        for (h, &c) in cons.iter().enumerate() {
            injection[layout.demand_nodes[d]][h] -= c;
        }
    }
    layout
        .ptdf
        .iter()
        .map(|row| {
            (0..s.hours)
                .map(|h| (0..n_nodes).map(|n| row[n] * injection[n][h]).sum())
                .collect()
        })
        .collect()
}

fn infeasibility_detail(s: &Scenario, offer: Option<&FirmOffer>, fixed: Option<&FirmSchedule>) -> String {
    let mut notes = Vec::new();
    for h in 0..s.hours {
        let fixed_demand: f64 = s
            .demands
            .iter()
            .map(|d| match &d.hours[h] {
                DemandHour::Fixed(q) => *q,
                DemandHour::Blocks(_) => 0.0,
            })
            .sum();
        let capacity: f64 = s
            .units
            .iter()
            .map(|u| match (u.owner, offer, fixed) {
                (Owner::Firm, _, Some(f)) => f.get(&u.id).map(|x| x[h]).unwrap_or(0.0),
                (Owner::Firm, Some(o), _) => o
                    .get(&u.id)
                    .map(|o| o.params.p_max.min(o.curve.total_quantity()))
                    .unwrap_or(0.0),
                _ => u.true_params.p_max.min(u.true_curve.total_quantity()),
            })
            .sum();
        if fixed_demand > capacity + lp::FEASIBILITY_TOL {
            notes.push(format!(
                "hour {h}: fixed demand {fixed_demand} MW exceeds available generation {capacity} MW"
            ));
        }
    }
    if notes.is_empty() {
        "fixed demand cannot be served within network, minimum-output and ramp limits".into()
    } else {
        notes.join("; ")
    }
}

fn unit_revenues(s: &Scenario, result: &ClearingResult) -> Vec<f64> {
    s.units
        .iter()
        .zip(&result.dispatch.unit_output)
        .map(|(u, out)| {
            let node = s.network.node_index(&u.node).expect("validated node");
            out.iter().zip(&result.lmp[node]).map(|(p, price)| p * price).sum()
        })
        .collect()
}

/// Standard nodal settlement: loads pay and generators receive their LMP.
pub fn settle(s: &Scenario, result: &ClearingResult) -> Settlement {
    let load_payments: Vec<f64> = s
        .demands
        .iter()
        .zip(&result.dispatch.consumption)
        .map(|(d, cons)| {
            let node = s.network.node_index(&d.node).expect("validated node");
            cons.iter().zip(&result.lmp[node]).map(|(c, price)| c * price).sum()
        })
        .collect();
    let generator_receipts = unit_revenues(s, result);
    let congestion_rent = load_payments.iter().sum::<f64>() - generator_receipts.iter().sum::<f64>();
    Settlement {
        load_payments,
        generator_receipts,
        congestion_rent,
    }
}
