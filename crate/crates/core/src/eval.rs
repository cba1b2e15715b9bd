//! Experiment harness: runs policies against simulated users over
//! questions × personas × seeds, sweeps `ε`, and writes per-run and summary
//! tables as CSV.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{trace, TraceOptions};
use crate::domains::{generate_synth2d, load_manifest, sample_personas, Persona, Synth2dConfig};
use crate::elicit::{run_session, ElicitationSession, PolicyConfig, PolicyKind, StopMode, StopReason};
use crate::error::{Error, Result};
use crate::prefcore::CandidatePool;
use crate::seeding::derive_seed;
use crate::simusers::{UserKind, UserModel};
use crate::vector::argmax_first;

/// Step cap applied to every run unless the plan overrides it.
pub const DEFAULT_STEP_CAP: usize = 199;

/// Fixed step counts at which `iid_best` is reported by default.
pub const DEFAULT_IID_STEPS: [usize; 6] = [1, 2, 5, 10, 20, 50];

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Geometry of the synthetic 2D domain. The generator seed comes from the
/// plan's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Synth2dSource {
    pub num_candidates: usize,
    pub candidate_radius: f64,
    pub theta_radius: f64,
    pub num_questions: usize,
    pub num_users: usize,
}

impl Default for Synth2dSource {
    fn default() -> Self {
        let c = Synth2dConfig::default();
        Self {
            num_candidates: c.num_candidates,
            candidate_radius: c.candidate_radius,
            theta_radius: c.theta_radius,
            num_questions: c.num_questions,
            num_users: c.num_users,
        }
    }
}

impl Synth2dSource {
    pub fn config(&self, master_seed: u64) -> Synth2dConfig {
        Synth2dConfig {
            num_candidates: self.num_candidates,
            candidate_radius: self.candidate_radius,
            theta_radius: self.theta_radius,
            num_questions: self.num_questions,
            num_users: self.num_users,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSource {
    Synth2d(Synth2dSource),
    /// Embedding pools listed in a question manifest; simulated personas
    /// are drawn uniformly on the sphere of radius `persona_radius`
    /// (defaults to the plan's norm bound).
    Manifest {
        path: PathBuf,
        #[serde(default = "default_personas")]
        personas_per_question: usize,
        #[serde(default)]
        persona_radius: Option<f64>,
    },
}

fn default_personas() -> usize {
    3
}

fn default_norm_bound() -> f64 {
    3.0
}

fn default_delta() -> f64 {
    0.05
}

fn default_step_cap() -> usize {
    DEFAULT_STEP_CAP
}

fn default_iid_steps() -> Vec<usize> {
    DEFAULT_IID_STEPS.to_vec()
}

fn default_num_seeds() -> usize {
    5
}

/// Declarative experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Label written to the `domain` column; defaults to the source kind.
    #[serde(default)]
    pub name: Option<String>,
    pub source: DomainSource,
    pub policies: Vec<PolicyKind>,
    /// `ε` grid for the adaptive policies in stop-on-`ε` mode.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Budgets for the adaptive policies in fixed-budget mode.
    #[serde(default)]
    pub fixed_budgets: Vec<usize>,
    #[serde(default = "default_iid_steps")]
    pub iid_steps: Vec<usize>,
    pub user_kinds: Vec<UserKind>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_norm_bound")]
    pub norm_bound: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
    /// Per-step confidence-set diagnostics for adaptive runs.
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub area_samples: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    /// A synth2d plan with default geometry and no policies.
    pub fn synth2d(master_seed: u64) -> Self {
        Self {
            name: None,
            source: DomainSource::Synth2d(Synth2dSource::default()),
            policies: Vec::new(),
            epsilons: Vec::new(),
            fixed_budgets: Vec::new(),
            iid_steps: default_iid_steps(),
            user_kinds: vec![UserKind::Btl, UserKind::Consistent],
            num_seeds: default_num_seeds(),
            master_seed,
            norm_bound: default_norm_bound(),
            delta: default_delta(),
            step_cap: DEFAULT_STEP_CAP,
            diagnostics: false,
            area_samples: 0,
            output: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut plan: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if let DomainSource::Manifest { path: p, .. } = &mut plan.source {
            if p.is_relative() {
                *p = path.parent().unwrap_or_else(|| Path::new(".")).join(&*p);
            }
        }
        Ok(plan)
    }

    pub fn domain_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| match &self.source {
            DomainSource::Synth2d(_) => "synth2d".into(),
            DomainSource::Manifest { path, .. } => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "manifest".into())
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.policies.is_empty() {
            return bad("the plan lists no policies".into());
        }
        if self.user_kinds.is_empty() {
            return bad("the plan lists no user kinds".into());
        }
        if self.user_kinds.contains(&UserKind::External) {
            return bad("external users cannot be simulated".into());
        }
        if self.num_seeds == 0 {
            return bad("num_seeds must be >= 1".into());
        }
        if self.step_cap == 0 {
            return bad("step_cap must be >= 1".into());
        }
        if !(self.norm_bound > 0.0 && self.norm_bound.is_finite()) {
            return bad(format!("norm bound must be positive, got {}", self.norm_bound));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && **e <= self.norm_bound)) {
            return bad(format!("epsilon {e} lies outside [0, {}]", self.norm_bound));
        }
        let mut budgets = self.iid_steps.iter().chain(&self.fixed_budgets);
        if let Some(b) = budgets.find(|&&b| b == 0 || b > self.step_cap) {
            return bad(format!("step count {b} lies outside [1, {}]", self.step_cap));
        }
        let adaptive = self.policies.iter().any(|p| p.is_adaptive());
        if adaptive && self.epsilons.is_empty() && self.fixed_budgets.is_empty() {
            return bad("adaptive policies need an epsilon grid or fixed budgets".into());
        }
        if self.policies.contains(&PolicyKind::IidBest) && self.iid_steps.is_empty() {
            return bad("iid_best needs at least one step count".into());
        }
        Ok(())
    }

    /// Policy configurations expanded from the grids, in plan order.
    pub fn policy_cells(&self) -> Vec<PolicyCell> {
        let mut cells = Vec::new();
        for &kind in &self.policies {
            match kind {
                PolicyKind::Oracle | PolicyKind::Random => {
                    cells.push(PolicyCell { kind, mode: StopMode::FixedBudget, epsilon: None, budget: 0 });
                }
                PolicyKind::IidBest => {
                    for &b in &self.iid_steps {
                        cells.push(PolicyCell { kind, mode: StopMode::FixedBudget, epsilon: None, budget: b });
                    }
                }
                PolicyKind::UserAlign | PolicyKind::UserAlignLoss => {
                    for &e in &self.epsilons {
                        cells.push(PolicyCell {
                            kind,
                            mode: StopMode::StopOnEpsilon,
                            epsilon: Some(e),
                            budget: self.step_cap,
                        });
                    }
                    for &b in &self.fixed_budgets {
                        cells.push(PolicyCell { kind, mode: StopMode::FixedBudget, epsilon: None, budget: b });
                    }
                }
            }
        }
        cells
    }
}

/// One policy setting of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyCell {
    pub kind: PolicyKind,
    pub mode: StopMode,
    /// Stopping tolerance; `None` outside stop-on-`ε` mode.
    pub epsilon: Option<f64>,
    /// Step cap, or the exact number of comparisons in fixed-budget mode.
    pub budget: usize,
}

impl PolicyCell {
    pub fn label(&self) -> String {
        match self.epsilon {
            Some(e) => format!("{}/eps={e}", self.kind),
            None => format!("{}/steps={}", self.kind, self.budget),
        }
    }

    pub fn config(&self, norm_bound: f64, delta: f64, seed: u64) -> PolicyConfig<f64> {
        let base = PolicyConfig::new(self.kind, norm_bound).with_delta(delta).with_seed(seed);
        match self.mode {
            StopMode::StopOnEpsilon => base.with_epsilon(self.epsilon.unwrap_or(0.0)).with_budget(self.budget),
            StopMode::FixedBudget => base.fixed_budget(self.budget),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuestionInstance {
    pub pool: Arc<CandidatePool<f64>>,
    pub personas: Vec<Persona<f64>>,
}

impl QuestionInstance {
    pub fn persona(&self, id: &str) -> Option<&Persona<f64>> {
        self.personas.iter().find(|p| p.id == id)
    }
}

/// Pools and simulated personas of one domain.
#[derive(Debug, Clone)]
pub struct DomainInstance {
    pub name: String,
    pub questions: Vec<QuestionInstance>,
}

impl DomainInstance {
    pub fn question(&self, id: &str) -> Option<&QuestionInstance> {
        self.questions.iter().find(|q| q.pool.question_id() == id)
    }
}

/// Materializes the plan's domain. Failures name the offending question.
pub fn load_domain(plan: &ExperimentPlan) -> Result<DomainInstance> {
    let questions = match &plan.source {
        DomainSource::Synth2d(src) => generate_synth2d::<f64>(&src.config(plan.master_seed))?
            .into_iter()
            .map(|q| QuestionInstance { pool: Arc::new(q.pool), personas: q.personas })
            .collect(),
        DomainSource::Manifest { path, personas_per_question, persona_radius } => {
            let manifest = load_manifest(path).map_err(|e| e.context(format!("manifest {}", path.display())))?;
            let radius = persona_radius.unwrap_or(plan.norm_bound);
            manifest
                .iter()
                .map(|m| {
                    let pool = m.load_pool::<f64>().map_err(|e| e.context(format!("question {}", m.question_id)))?;
                    let personas = sample_personas(
                        pool.dimension(),
                        radius,
                        *personas_per_question,
                        plan.master_seed,
                        &m.question_id,
                    )?;
                    Ok(QuestionInstance { pool: Arc::new(pool), personas })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(DomainInstance { name: plan.domain_name(), questions })
}

/// One row of the per-run table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub domain: String,
    pub question_id: String,
    pub persona_id: String,
    pub user_kind: UserKind,
    pub seed: usize,
    pub policy: PolicyKind,
    pub mode: StopMode,
    pub epsilon: Option<f64>,
    pub budget: usize,
    /// Comparisons used.
    pub interaction_cost: usize,
    /// `p_u[final ≻ baseline]`.
    pub win_rate: Option<f64>,
    /// `max_y ⟨θ★, φ(y)⟩ − ⟨θ★, φ(final)⟩`.
    pub optimality_gap: Option<f64>,
    pub final_candidate_id: Option<String>,
    pub stopped_by: Option<StopReason>,
    pub final_stopping_value: Option<f64>,
    /// `ok`, or the error that ended the cell.
    pub status: String,
    /// Key of the per-step diagnostics rows.
    pub run_id: String,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn sort_key(&self) -> (&str, &str, &str, String, usize, &str, String, usize, u64) {
        (
            &self.domain,
            &self.question_id,
            &self.persona_id,
            self.user_kind.to_string(),
            self.seed,
            self.policy.as_str(),
            format!("{:?}", self.mode),
            self.budget,
            // ε ≥ 0, so the bit pattern orders like the value
            self.epsilon.map_or(0, |e| e.to_bits().wrapping_add(1)),
        )
    }
}

/// One row of the per-step diagnostics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub run_id: String,
    pub step: usize,
    pub normalized_area: Option<f64>,
    pub viable_pool_size: usize,
    pub stopping_value: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub diagnostics: Vec<DiagnosticsRow>,
}

struct Cell<'a> {
    question: &'a QuestionInstance,
    persona: &'a Persona<f64>,
    user_kind: UserKind,
    seed: usize,
    policy: PolicyCell,
}

impl Cell<'_> {
    fn user_key(&self) -> String {
        format!("{}/{}/{}/s{}", self.question.pool.question_id(), self.persona.id, self.user_kind, self.seed)
    }

    fn run_id(&self) -> String {
        format!("{}/{}", self.user_key(), self.policy.label())
    }
}

/// Runs every (question, persona, user kind, seed, policy setting) cell.
///
/// The simulated user's stream depends on the cell without the policy, so
/// all policies face the same user noise. A failing cell is recorded with
/// its error and the sweep continues. Records come back sorted; when the
/// plan names an output directory the tables are written there.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let domain = load_domain(plan)?;
    let out = run_domain(plan, &domain)?;
    if let Some(dir) = &plan.output {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// [`run_plan`] over an already materialized domain; writes nothing.
pub fn run_domain(plan: &ExperimentPlan, domain: &DomainInstance) -> Result<ExperimentOutput> {
    plan.validate()?;
    let policies = plan.policy_cells();
    let mut cells = Vec::new();
    for question in &domain.questions {
        for persona in &question.personas {
            for &user_kind in &plan.user_kinds {
                for seed in 0..plan.num_seeds {
                    for &policy in &policies {
                        cells.push(Cell { question, persona, user_kind, seed, policy });
                    }
                }
            }
        }
    }
    let results: Vec<(RunRecord, Vec<DiagnosticsRow>)> =
        cells.par_iter().map(|c| run_cell(plan, &domain.name, c)).collect();
    let mut out = ExperimentOutput::default();
    for (record, rows) in results {
        out.records.push(record);
        out.diagnostics.extend(rows);
    }
    out.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out.diagnostics.sort_by(|a, b| a.run_id.cmp(&b.run_id).then(a.step.cmp(&b.step)));
    Ok(out)
}

fn run_cell(plan: &ExperimentPlan, domain: &str, cell: &Cell<'_>) -> (RunRecord, Vec<DiagnosticsRow>) {
    let pool = &cell.question.pool;
    let mut record = RunRecord {
        domain: domain.to_string(),
        question_id: pool.question_id().to_string(),
        persona_id: cell.persona.id.clone(),
        user_kind: cell.user_kind,
        seed: cell.seed,
        policy: cell.policy.kind,
        mode: cell.policy.mode,
        epsilon: cell.policy.epsilon,
        budget: cell.policy.budget,
        interaction_cost: 0,
        win_rate: None,
        optimality_gap: None,
        final_candidate_id: None,
        stopped_by: None,
        final_stopping_value: None,
        status: "ok".into(),
        run_id: cell.run_id(),
    };
    let mut rows = Vec::new();
    if let Err(e) = fill_cell(plan, cell, &mut record, &mut rows) {
        log::warn!("cell {} failed: {e}", record.run_id);
        record.status = format!("error: {e}");
    }
    (record, rows)
}

fn fill_cell(
    plan: &ExperimentPlan,
    cell: &Cell<'_>,
    record: &mut RunRecord,
    rows: &mut Vec<DiagnosticsRow>,
) -> Result<()> {
    let pool = &cell.question.pool;
    let user_seed = derive_seed(plan.master_seed, &format!("user/{}", cell.user_key()));
    let policy_seed = derive_seed(plan.master_seed, &format!("policy/{}", cell.run_id()));
    let mut user = UserModel::with_kind(cell.user_kind, cell.persona.theta_star.clone(), user_seed)?;
    let config = cell.policy.config(plan.norm_bound, plan.delta, policy_seed);
    let mut session = ElicitationSession::new(Arc::clone(pool), config)?;
    let outcome = run_session(&mut session, &mut user)?;

    let utilities = user.true_utility(pool)?;
    let best = argmax_first(utilities.iter().copied()).expect("pool is never empty");
    record.interaction_cost = outcome.interaction_cost;
    record.win_rate = Some(user.win_rate(pool, outcome.final_index)?);
    record.optimality_gap = Some(utilities[best] - utilities[outcome.final_index]);
    record.final_candidate_id = Some(pool.candidate(outcome.final_index)?.id.clone());
    record.stopped_by = Some(outcome.stopped_by);
    record.final_stopping_value = outcome.stopping_value;

    if plan.diagnostics && cell.policy.kind.is_adaptive() {
        let opts = TraceOptions {
            norm_bound: plan.norm_bound,
            delta: plan.delta,
            use_halfspaces: cell.policy.kind.uses_halfspaces(),
            area_samples: if pool.dimension() == 2 { plan.area_samples } else { 0 },
            area_seed: derive_seed(plan.master_seed, &format!("area/{}", cell.run_id())),
        };
        for s in trace(pool, session.data(), Some(session.transcript()), &opts)? {
            rows.push(DiagnosticsRow {
                run_id: record.run_id.clone(),
                step: s.step,
                normalized_area: s.normalized_area,
                viable_pool_size: s.viable_pool_size,
                stopping_value: s.stopping_value,
            });
        }
    }
    Ok(())
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    write_csv(path.as_ref(), records)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    read_csv(path.as_ref())
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn write_diagnostics(path: impl AsRef<Path>, rows: &[DiagnosticsRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

/// Writes the run, summary and (when present) diagnostics tables into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, out: &ExperimentOutput) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_records(dir.join(RUNS_FILE), &out.records)?;
    if !out.records.is_empty() {
        write_summary(dir.join(SUMMARY_FILE), &aggregate(&out.records)?)?;
    }
    if !out.diagnostics.is_empty() {
        write_diagnostics(dir.join(DIAGNOSTICS_FILE), &out.diagnostics)?;
    }
    Ok(())
}

/// Sample mean and standard error `s / √n` with the `n − 1` sample
/// deviation; a single value has standard error 0.
pub fn mean_se(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// One group of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: String,
    pub policy: PolicyKind,
    pub user_kind: UserKind,
    pub mode: StopMode,
    pub epsilon: Option<f64>,
    pub budget: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_win_rate: f64,
    pub se_win_rate: f64,
    pub mean_cost: f64,
    pub se_cost: f64,
    pub mean_optimality_gap: f64,
}

/// Per (domain, policy, user kind, mode, `ε`, budget) means and standard
/// errors. Failed runs are counted but excluded from the statistics; a
/// group with no successful run is omitted with a warning.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to aggregate".into()));
    }
    let mut groups: BTreeMap<_, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            r.domain.clone(),
            r.policy.as_str(),
            r.user_kind.to_string(),
            format!("{:?}", r.mode),
            r.budget,
            r.epsilon.map_or(0, |e| e.to_bits().wrapping_add(1)),
        );
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (key, group) in groups {
        let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| r.is_ok()).collect();
        let first = group[0];
        if ok.is_empty() {
            log::warn!("group {key:?} has no successful runs; omitted");
            continue;
        }
        let win: Vec<f64> = ok.iter().map(|r| r.win_rate.unwrap_or(f64::NAN)).collect();
        let cost: Vec<f64> = ok.iter().map(|r| r.interaction_cost as f64).collect();
        let gap: Vec<f64> = ok.iter().map(|r| r.optimality_gap.unwrap_or(f64::NAN)).collect();
        let (mean_win_rate, se_win_rate) = mean_se(&win).expect("nonempty");
        let (mean_cost, se_cost) = mean_se(&cost).expect("nonempty");
        rows.push(SummaryRow {
            domain: first.domain.clone(),
            policy: first.policy,
            user_kind: first.user_kind,
            mode: first.mode,
            epsilon: first.epsilon,
            budget: first.budget,
            runs: ok.len(),
            failed: group.len() - ok.len(),
            mean_win_rate,
            se_win_rate,
            mean_cost,
            se_cost,
            mean_optimality_gap: mean_se(&gap).expect("nonempty").0,
        });
    }
    Ok(rows)
}

/// Mean head-to-head preference of A's selections over B's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    pub win_fraction: f64,
    pub pairs: usize,
}

/// Pairs records by (question, persona, user kind, seed) and averages
/// `p_u[y_A ≻ y_B]` under each pair's user model.
///
/// Every record must have a partner on the other side and a final
/// candidate; orphans are reported together.
pub fn head_to_head(a: &[RunRecord], b: &[RunRecord], domain: &DomainInstance) -> Result<HeadToHead> {
    type Key = (String, String, String, usize);
    let key = |r: &RunRecord| -> Key { (r.question_id.clone(), r.persona_id.clone(), r.user_kind.to_string(), r.seed) };
    let index = |side: &[RunRecord], name: &str| -> Result<HashMap<Key, usize>> {
        let mut m = HashMap::new();
        for (i, r) in side.iter().enumerate() {
            if m.insert(key(r), i).is_some() {
                return Err(Error::InvalidArgument(format!("side {name} has several records for {}", r.run_id)));
            }
        }
        Ok(m)
    };
    let ia = index(a, "A")?;
    let ib = index(b, "B")?;
    let mut orphans: Vec<&str> = a
        .iter()
        .filter(|r| !ib.contains_key(&key(r)))
        .chain(b.iter().filter(|r| !ia.contains_key(&key(r))))
        .map(|r| r.run_id.as_str())
        .collect();
    if !orphans.is_empty() {
        orphans.sort_unstable();
        return Err(Error::InvalidArgument(format!("unpaired records: {}", orphans.join(", "))));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("no records to compare".into()));
    }
    let mut total = 0.0;
    for ra in a {
        let rb = &b[ib[&key(ra)]];
        let q = domain
            .question(&ra.question_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown question {}", ra.question_id)))?;
        let persona = q
            .persona(&ra.persona_id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown persona {}", ra.persona_id)))?;
        let user = UserModel::with_kind(ra.user_kind, persona.theta_star.clone(), 0)?;
        let feature = |r: &RunRecord| -> Result<&[f64]> {
            let id = r
                .final_candidate_id
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument(format!("record {} has no final candidate", r.run_id)))?;
            let idx = q.pool.index_of(id).ok_or_else(|| Error::InvalidArgument(format!("unknown candidate {id}")))?;
            Ok(q.pool.features(idx))
        };
        total += user.preference_probability(&q.pool, feature(ra)?, feature(rb)?)?;
    }
    Ok(HeadToHead { win_fraction: total / a.len() as f64, pairs: a.len() })
}

#[cfg(test)]
mod tests;
