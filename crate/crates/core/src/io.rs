//! Scenario documents and CSV report tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Violation;
use crate::grid::{validate_scenario, DemandBid, FirmOffer, GeneratingUnit, Line, Network, NodeId, Scenario, UnitId, UnitOffer};
use crate::market::{ClearingResult, Settlement};
use crate::regulation::{RegulationOutcome, RegulatorEstimate};
use crate::strategy::{GridSpec, Regime, SweepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: Vec<NodeId>,
    #[serde(default)]
    pub lines: Vec<Line>,
    /// Optional at parse time so that a missing reference is reported as
    /// a validation error rather than a parse error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub network: NetworkDocument,
    pub units: Vec<GeneratingUnit>,
    #[serde(default)]
    pub demands: Vec<DemandBid>,
    pub hours: usize,
    pub firm_units: Vec<UnitId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regulator_estimate: Option<BTreeMap<UnitId, UnitOffer>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion_grid: Option<GridSpec>,
}

/// A validated scenario with its optional companions filled in: the
/// estimate defaults to the truth and the grid to [`GridSpec::default`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub estimate: RegulatorEstimate,
    pub grid: GridSpec,
    pub estimate_given: bool,
    pub grid_given: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key at {path}: {message}")]
    UnknownKey { path: String, message: String },
    #[error("invalid scenario:\n{}", list(.0))]
    Validation(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

impl LoadError {
    /// Document paths named by the error.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            LoadError::Io { .. } => vec![],
            LoadError::Parse { path, .. } | LoadError::UnknownKey { path, .. } => vec![path.as_str()],
            LoadError::Validation(v) => v.iter().map(|x| x.path.as_str()).collect(),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<LoadedScenario, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        if message.starts_with("unknown field") || message.starts_with("unknown variant") {
            LoadError::UnknownKey { path, message }
        } else {
            LoadError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message,
            }
        }
    })?;
    from_document(doc)
}

pub fn from_document(doc: ScenarioDocument) -> Result<LoadedScenario, LoadError> {
    let mut violations = Vec::new();
    let reference = doc.network.reference.clone().unwrap_or_else(|| {
        violations.push(Violation::new("network.reference", "missing reference node"));
        String::new()
    });
    let scenario = Scenario {
        network: Network {
            nodes: doc.network.nodes,
            lines: doc.network.lines,
            reference,
        },
        units: doc.units,
        demands: doc.demands,
        hours: doc.hours,
        firm_unit_ids: doc.firm_units,
    };
    if violations.is_empty() {
        if let Err(v) = validate_scenario(&scenario) {
            violations.extend(v);
        }
    }

    let estimate_given = doc.regulator_estimate.is_some();
    let estimate = match doc.regulator_estimate {
        Some(units) => RegulatorEstimate(FirmOffer { units }),
        None => RegulatorEstimate::exact(&scenario),
    };
    if violations.is_empty() {
        if let Err(e) = estimate.as_offer().check_units(&scenario) {
            violations.push(Violation::new("regulator_estimate", e.to_string()));
        }
    }

    let grid_given = doc.distortion_grid.is_some();
    let grid = doc.distortion_grid.unwrap_or_default();
    for (name, values) in [
        ("alpha", &grid.price_scales),
        ("beta", &grid.price_adds),
        ("withhold", &grid.withholds),
        ("ramp_scale", &grid.ramp_scales),
    ] {
        if values.is_empty() {
            violations.push(Violation::new(format!("distortion_grid.{name}"), "must not be empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            violations.push(Violation::new(format!("distortion_grid.{name}[{i}]"), "must be finite"));
        }
    }
    if !grid.points().iter().any(|p| p.is_truthful()) {
        violations.push(Violation::new(
            "distortion_grid",
            "must contain the truthful point (alpha 1, beta 0, withhold 0, ramp_scale 1)",
        ));
    }

    if !violations.is_empty() {
        return Err(LoadError::Validation(violations));
    }
    Ok(LoadedScenario {
        scenario,
        estimate,
        grid,
        estimate_given,
        grid_given,
    })
}

pub fn to_document(s: &Scenario, estimate: Option<&RegulatorEstimate>, grid: Option<&GridSpec>) -> ScenarioDocument {
    ScenarioDocument {
        network: NetworkDocument {
            nodes: s.network.nodes.clone(),
            lines: s.network.lines.clone(),
            reference: Some(s.network.reference.clone()),
        },
        units: s.units.clone(),
        demands: s.demands.clone(),
        hours: s.hours,
        firm_units: s.firm_unit_ids.clone(),
        regulator_estimate: estimate.map(|e| e.as_offer().units.clone()),
        distortion_grid: grid.cloned(),
    }
}

/// Pretty-printed scenario document; parses back to the same objects.
pub fn emit_scenario(s: &Scenario, estimate: Option<&RegulatorEstimate>, grid: Option<&GridSpec>) -> String {
    serde_json::to_string_pretty(&to_document(s, estimate, grid)).expect("document serializes")
}

/// Money and MW to 1e-6, never printing a negative zero.
pub fn fmt_num(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.6}")
}

/// A header row plus records, written as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Writes `<dir>/<name>.csv`.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv())?;
        Ok(path)
    }

    /// Value in `column` of the first row whose first cell is `key`.
    pub fn lookup(&self, key: &str, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.iter().find(|r| r[0] == key).map(|r| r[c].as_str())
    }
}

pub fn lmp_table(s: &Scenario, r: &ClearingResult) -> Table {
    let mut t = Table::new("lmp", &["node", "hour", "lmp"]);
    for (n, node) in s.network.nodes.iter().enumerate() {
        for h in 0..s.hours {
            t.push(vec![node.clone(), h.to_string(), fmt_num(r.lmp[n][h])]);
        }
    }
    t
}

pub fn dispatch_table(s: &Scenario, r: &ClearingResult) -> Table {
    let mut t = Table::new("dispatch", &["kind", "id", "hour", "mw"]);
    for (u, out) in s.units.iter().zip(&r.dispatch.unit_output) {
        let kind = match u.owner {
            crate::grid::Owner::Firm => "firm_unit",
            crate::grid::Owner::Other => "other_unit",
        };
        for (h, mw) in out.iter().enumerate() {
            t.push(vec![kind.into(), u.id.clone(), h.to_string(), fmt_num(*mw)]);
        }
    }
    for (d, cons) in r.dispatch.consumption.iter().enumerate() {
        for (h, mw) in cons.iter().enumerate() {
            t.push(vec!["demand".into(), format!("demand{d}"), h.to_string(), fmt_num(*mw)]);
        }
    }
    for (l, flows) in r.dispatch.flows.iter().enumerate() {
        let line = &s.network.lines[l];
        for (h, mw) in flows.iter().enumerate() {
            t.push(vec!["line".into(), format!("{}-{}", line.from, line.to), h.to_string(), fmt_num(*mw)]);
        }
    }
    t
}

pub fn settlement_table(s: &Scenario, st: &Settlement) -> Table {
    let mut t = Table::new("settlement", &["party", "role", "amount"]);
    for (d, pay) in st.load_payments.iter().enumerate() {
        t.push(vec![format!("demand{d}"), "load_payment".into(), fmt_num(*pay)]);
    }
    for (u, rec) in s.units.iter().zip(&st.generator_receipts) {
        t.push(vec![u.id.clone(), "generator_receipt".into(), fmt_num(*rec)]);
    }
    t.push(vec!["system".into(), "congestion_rent".into(), fmt_num(st.congestion_rent)]);
    t
}

pub fn summary_table(r: &ClearingResult) -> Table {
    let mut t = Table::new("summary", &["field", "value"]);
    for (k, v) in [
        ("objective", r.objective),
        ("u_other", r.u_other),
        ("firm_offered_cost", r.firm_offered_cost),
        ("firm_true_cost", r.firm_true_cost),
        ("true_welfare", r.true_welfare()),
    ] {
        t.push(vec![k.into(), fmt_num(v)]);
    }
    t
}

pub fn outcome_table(o: &RegulationOutcome) -> Table {
    let mut t = Table::new("outcome", &["field", "value"]);
    for (k, v) in [
        ("base_objective", o.base_run.objective),
        ("base_u_other", o.base_run.u_other),
        ("reference_objective", o.reference_run.objective),
        ("reference_u_other", o.reference_run.u_other),
        ("reference_revenue", o.reference_revenue),
        ("c", o.c),
        ("regulated_revenue", o.regulated_revenue),
        ("lmp_revenue_at_base", o.lmp_revenue_at_base),
        ("firm_payment", o.firm_payment()),
        ("uplift", o.uplift),
        ("firm_true_cost", o.base_run.firm_true_cost),
        ("firm_profit", o.firm_payment() - o.base_run.firm_true_cost),
    ] {
        t.push(vec![k.into(), fmt_num(v)]);
    }
    t
}

pub fn allocation_table(s: &Scenario, o: &RegulationOutcome) -> Table {
    let mut t = Table::new("allocations", &["demand", "node", "allocation"]);
    for (d, (bid, a)) in s.demands.iter().zip(&o.allocations).enumerate() {
        t.push(vec![format!("demand{d}"), bid.node.clone(), fmt_num(*a)]);
    }
    t
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

/// One row per grid point; `argmax` flags ties for `regime`.
pub fn sweep_table(r: &SweepResult, regime: Regime) -> Table {
    let mut t = Table::new(
        "sweep",
        &[
            "index",
            "alpha",
            "beta",
            "withhold",
            "ramp_scale",
            "status",
            "profit_none",
            "profit_standard",
            "profit_proposed",
            "deadweight_loss",
            "dispatch_fingerprint",
            "truthful",
            "argmax",
        ],
    );
    let ties = &r.argmax(regime).ties;
    for (i, p) in r.points.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            p.spec.price_scale.to_string(),
            p.spec.price_add.to_string(),
            p.spec.withhold.to_string(),
            p.spec.ramp_scale.to_string(),
        ];
        match &p.values {
            Ok(v) => row.extend([
                "ok".into(),
                fmt_num(v.profit_unregulated),
                fmt_num(v.profit_standard),
                fmt_num(v.profit_proposed),
                fmt_num(v.deadweight_loss),
                v.fingerprint.clone(),
            ]),
            Err(e) => row.extend([
                format!("infeasible: {e}"),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]),
        }
        row.push(flag(i == r.truthful_index));
        row.push(flag(ties.contains(&i)));
        t.push(row);
    }
    t
}

pub fn sweep_summary(r: &SweepResult) -> Table {
    let mut t = Table::new(
        "sweep_summary",
        &["regime", "best_profit", "truthful_profit", "argmax_indices", "truthful_is_argmax"],
    );
    for regime in Regime::ALL {
        let a = r.argmax(regime);
        let name = match regime {
            Regime::None => "none",
            Regime::Standard => "standard",
            Regime::Proposed => "proposed",
        };
        t.push(vec![
            name.into(),
            fmt_num(a.best),
            fmt_num(r.truthful().profit(regime)),
            a.ties.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            flag(a.ties.contains(&r.truthful_index)),
        ]);
    }
    t
}
