//! Problem instances, validation, policies, and (de)serialization.
//!
//! Time indexing follows the convention that the system transitions to
//! `x_k` when `u_k` is applied: the stage-`k` policy conditions on
//! `x_{k-1}` and the stage-`k` plant on the composite `(x_{k-1}, u_k)`.
//! Plant conditioning uses a single composite index ordered state-major
//! (`x_{k-1} * m + u_k`), so one row-stochastic table type serves both
//! plants and policies.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::{ConditionalPmf, DeformParam, KahanSum, Pmf, ROW_SUM_TOLERANCE};
use crate::error::{Error, Result, ValidationIssue};

/// Raw, unvalidated problem file contents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemSpec {
    pub r: f64,
    pub horizon: usize,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub prior: Vec<f64>,
    pub ref_prior: Vec<f64>,
    /// `plant[k][(x, u)]` -> row over states; stage keys are 1-based strings.
    pub plant: BTreeMap<String, Vec<Vec<f64>>>,
    pub ref_plant: BTreeMap<String, Vec<Vec<f64>>>,
    /// `ref_policy[k][x]` -> row over actions.
    pub ref_policy: BTreeMap<String, Vec<Vec<f64>>>,
    /// `costs[k][x]`; costs depend on state only.
    pub costs: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions>,
}

/// Optional solver block of a problem file; all fields optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct SolverOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// How the fixed-point iterate is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Copy the reference policy tables.
    Reference,
    /// Uniform mass on each reference-policy row support.
    Uniform,
    /// A user-supplied sequence, validated against the reference support.
    Custom(PolicySequence),
}

/// Outer-loop configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationConfig {
    /// Relaxation weight in (0, 1]; the proven contraction regime is < 1/2.
    pub omega: f64,
    /// Sup-L1 stopping threshold.
    pub tol: f64,
    pub max_outer: usize,
    pub init_mode: InitMode,
    /// Recorded for reproducibility of randomized harnesses; the solver
    /// itself is deterministic.
    pub rng_seed: u64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            omega: 0.4,
            tol: 1e-10,
            max_outer: 10_000,
            init_mode: InitMode::Reference,
            rng_seed: 0,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Parse {
                context: Some("solver.omega".into()),
                message: format!("omega must lie in (0, 1], got {}", self.omega),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parse {
                context: Some("solver.tol".into()),
                message: format!("tol must be positive, got {}", self.tol),
            });
        }
        if self.max_outer == 0 {
            return Err(Error::Parse {
                context: Some("solver.max_outer".into()),
                message: "max_outer must be positive".into(),
            });
        }
        Ok(())
    }
}

/// The decision variable: one policy table `p_k(u_k | x_{k-1})` per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySequence {
    stages: Vec<ConditionalPmf>,
}

impl PolicySequence {
    pub fn new(stages: Vec<ConditionalPmf>) -> Self {
        PolicySequence { stages }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Stage table, 1-based stage index.
    pub fn stage(&self, k: usize) -> &ConditionalPmf {
        &self.stages[k - 1]
    }

    pub fn stages(&self) -> &[ConditionalPmf] {
        &self.stages
    }
}

/// A problem that has passed all invariant checks, with normalized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub horizon: usize,
    pub r: DeformParam,
    pub prior: Pmf,
    pub ref_prior: Pmf,
    /// Stage-indexed (0-based vector for stages 1..=N) plant tables with
    /// composite conditioning `(x_{k-1}, u_k)`, state-major.
    pub plant: Vec<ConditionalPmf>,
    pub ref_plant: Vec<ConditionalPmf>,
    pub ref_policy: Vec<ConditionalPmf>,
    pub costs: Vec<Vec<f64>>,
    pub solver: IterationConfig,
}

impl ValidatedProblem {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Composite plant row index for `(x_{k-1}, u_k)`.
    pub fn plant_row(&self, x: usize, u: usize) -> usize {
        x * self.n_actions() + u
    }

    /// Stage tables by 1-based stage index.
    pub fn plant_stage(&self, k: usize) -> &ConditionalPmf {
        &self.plant[k - 1]
    }

    pub fn ref_plant_stage(&self, k: usize) -> &ConditionalPmf {
        &self.ref_plant[k - 1]
    }

    pub fn ref_policy_stage(&self, k: usize) -> &ConditionalPmf {
        &self.ref_policy[k - 1]
    }

    pub fn costs_stage(&self, k: usize) -> &[f64] {
        &self.costs[k - 1]
    }

    /// Reference policies as a policy sequence.
    pub fn reference_policies(&self) -> PolicySequence {
        PolicySequence::new(self.ref_policy.clone())
    }

    /// Checks a candidate sequence against shape, row-stochasticity, and the
    /// reference-support constraint.
    pub fn check_policy(&self, policies: &PolicySequence) -> Result<()> {
        if policies.horizon() != self.horizon {
            return Err(Error::ShapeMismatch(format!(
                "policy sequence has {} stages, problem horizon is {}",
                policies.horizon(),
                self.horizon
            )));
        }
        for k in 1..=self.horizon {
            let table = policies.stage(k);
            if table.n_conditions() != self.n_states() || table.n_outcomes() != self.n_actions() {
                return Err(Error::ShapeMismatch(format!(
                    "policy stage {k} has shape {}x{}, expected {}x{}",
                    table.n_conditions(),
                    table.n_outcomes(),
                    self.n_states(),
                    self.n_actions()
                )));
            }
            let reference = self.ref_policy_stage(k);
            for x in 0..self.n_states() {
                let row = table.row(x);
                let mut sum = KahanSum::new();
                for u in 0..self.n_actions() {
                    let w = row.get(u);
                    sum.add(w);
                    if w > 0.0 && reference.row(x).get(u) == 0.0 {
                        return Err(Error::SupportViolation {
                            stage: k,
                            row: x,
                            action: u,
                            mass: w,
                        });
                    }
                }
                if (sum.value() - 1.0).abs() > 1e-10 {
                    return Err(Error::ShapeMismatch(format!(
                        "policy stage {k} row {x} sums to {:.17e}",
                        sum.value()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_row(
    issues: &mut Vec<ValidationIssue>,
    field: &str,
    stage: Option<usize>,
    row_idx: usize,
    row: &[f64],
    expected_len: usize,
) -> Option<Pmf> {
    if row.len() != expected_len {
        issues.push(ValidationIssue {
            field: field.into(),
            stage,
            row: Some(row_idx),
            message: format!("row has {} entries, expected {}", row.len(), expected_len),
        });
        return None;
    }
    let mut sum = KahanSum::new();
    for (i, &w) in row.iter().enumerate() {
        if !w.is_finite() {
            issues.push(ValidationIssue {
                field: field.into(),
                stage,
                row: Some(row_idx),
                message: format!("entry {i} is non-finite ({w})"),
            });
            return None;
        }
        if w < 0.0 {
            issues.push(ValidationIssue {
                field: field.into(),
                stage,
                row: Some(row_idx),
                message: format!("entry {i} is negative ({w})"),
            });
            return None;
        }
        sum.add(w);
    }
    let s = sum.value();
    if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
        issues.push(ValidationIssue {
            field: field.into(),
            stage,
            row: Some(row_idx),
            message: format!("row sums to {s:.17e}, expected 1 within {ROW_SUM_TOLERANCE:e}"),
        });
        return None;
    }
    Some(Pmf::from_weights_normalized(row.to_vec(), s))
}

fn stage_table(
    issues: &mut Vec<ValidationIssue>,
    field: &str,
    map: &BTreeMap<String, Vec<Vec<f64>>>,
    stage: usize,
    n_rows: usize,
    n_cols: usize,
) -> Option<ConditionalPmf> {
    let Some(rows) = map.get(&stage.to_string()) else {
        issues.push(ValidationIssue {
            field: field.into(),
            stage: Some(stage),
            row: None,
            message: "stage missing".into(),
        });
        return None;
    };
    if rows.len() != n_rows {
        issues.push(ValidationIssue {
            field: field.into(),
            stage: Some(stage),
            row: None,
            message: format!("table has {} rows, expected {}", rows.len(), n_rows),
        });
        return None;
    }
    let mut pmfs = Vec::with_capacity(n_rows);
    for (i, row) in rows.iter().enumerate() {
        pmfs.push(check_row(issues, field, Some(stage), i, row, n_cols)?);
    }
    ConditionalPmf::new(pmfs).ok()
}

/// Checks every invariant of a problem spec and produces the normalized form.
///
/// Rows whose sums are within `1e-9` of 1 are renormalized; anything worse is
/// rejected with a machine-readable issue list.
pub fn validate(spec: &ProblemSpec) -> Result<ValidatedProblem> {
    let mut issues: Vec<ValidationIssue> = Vec::new();

    let n = spec.states.len();
    let m = spec.actions.len();
    if n == 0 {
        issues.push(ValidationIssue {
            field: "states".into(),
            stage: None,
            row: None,
            message: "state space is empty".into(),
        });
    }
    if m == 0 {
        issues.push(ValidationIssue {
            field: "actions".into(),
            stage: None,
            row: None,
            message: "action space is empty".into(),
        });
    }
    if spec.horizon == 0 {
        issues.push(ValidationIssue {
            field: "horizon".into(),
            stage: None,
            row: None,
            message: "horizon must be a positive integer".into(),
        });
    }
    let r = match DeformParam::new(spec.r) {
        Ok(r) => Some(r),
        Err(e) => {
            issues.push(ValidationIssue {
                field: "r".into(),
                stage: None,
                row: None,
                message: e.to_string(),
            });
            None
        }
    };
    if !issues.is_empty() {
        return Err(Error::Validation { issues });
    }

    let prior = check_row(&mut issues, "prior", None, 0, &spec.prior, n);
    let ref_prior = check_row(&mut issues, "ref_prior", None, 0, &spec.ref_prior, n);

    let mut plant = Vec::new();
    let mut ref_plant = Vec::new();
    let mut ref_policy = Vec::new();
    let mut costs = Vec::new();
    for k in 1..=spec.horizon {
        if let Some(t) = stage_table(&mut issues, "plant", &spec.plant, k, n * m, n) {
            plant.push(t);
        }
        if let Some(t) = stage_table(&mut issues, "ref_plant", &spec.ref_plant, k, n * m, n) {
            ref_plant.push(t);
        }
        if let Some(t) = stage_table(&mut issues, "ref_policy", &spec.ref_policy, k, n, m) {
            ref_policy.push(t);
        }
        match spec.costs.get(&k.to_string()) {
            None => issues.push(ValidationIssue {
                field: "costs".into(),
                stage: Some(k),
                row: None,
                message: "stage missing".into(),
            }),
            Some(c) if c.len() != n => issues.push(ValidationIssue {
                field: "costs".into(),
                stage: Some(k),
                row: None,
                message: format!(
                    "cost vector has {} entries, expected {} (costs depend on state only)",
                    c.len(),
                    n
                ),
            }),
            Some(c) => {
                if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                    issues.push(ValidationIssue {
                        field: "costs".into(),
                        stage: Some(k),
                        row: Some(i),
                        message: format!("cost entry is non-finite ({})", c[i]),
                    });
                } else {
                    costs.push(c.clone());
                }
            }
        }
    }

    // Absolute continuity: plant rows must vanish wherever ref_plant does,
    // and the prior wherever the reference prior does.
    if issues.is_empty() {
        if let (Some(p0), Some(q0)) = (&prior, &ref_prior) {
            for x in 0..n {
                if p0.get(x) > 0.0 && q0.get(x) == 0.0 {
                    issues.push(ValidationIssue {
                        field: "prior".into(),
                        stage: None,
                        row: Some(x),
                        message: "prior mass on a state where ref_prior is zero".into(),
                    });
                }
            }
        }
        for k in 1..=spec.horizon {
            let (s, q) = (&plant[k - 1], &ref_plant[k - 1]);
            for row in 0..n * m {
                for x in 0..n {
                    if s.row(row).get(x) > 0.0 && q.row(row).get(x) == 0.0 {
                        issues.push(ValidationIssue {
                            field: "plant".into(),
                            stage: Some(k),
                            row: Some(row),
                            message: format!(
                                "plant mass on outcome {x} where ref_plant is zero"
                            ),
                        });
                    }
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(Error::Validation { issues });
    }

    let solver = resolve_iteration_config(spec.solver.as_ref())?;
    Ok(ValidatedProblem {
        states: spec.states.clone(),
        actions: spec.actions.clone(),
        horizon: spec.horizon,
        r: r.unwrap(),
        prior: prior.unwrap(),
        ref_prior: ref_prior.unwrap(),
        plant,
        ref_plant,
        ref_policy,
        costs,
        solver,
    })
}

/// Resolves a file's optional solver block over the defaults.
pub fn resolve_iteration_config(opts: Option<&SolverOptions>) -> Result<IterationConfig> {
    let mut cfg = IterationConfig::default();
    if let Some(o) = opts {
        if let Some(w) = o.omega {
            cfg.omega = w;
        }
        if let Some(t) = o.tol {
            cfg.tol = t;
        }
        if let Some(x) = o.max_outer {
            cfg.max_outer = x;
        }
        if let Some(s) = o.seed {
            cfg.rng_seed = s;
        }
        if let Some(mode) = &o.init_mode {
            cfg.init_mode = match mode.as_str() {
                "reference" => InitMode::Reference,
                "uniform" => InitMode::Uniform,
                other => {
                    return Err(Error::Parse {
                        context: Some("solver.init_mode".into()),
                        message: format!(
                            "unknown init mode {other:?} (expected \"reference\" or \"uniform\")"
                        ),
                    })
                }
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Builds the initial fixed-point iterate.
pub fn init_policies(spec: &ValidatedProblem, cfg: &IterationConfig) -> Result<PolicySequence> {
    match &cfg.init_mode {
        InitMode::Reference => Ok(spec.reference_policies()),
        InitMode::Uniform => {
            let stages = spec
                .ref_policy
                .iter()
                .map(|table| {
                    let rows = table
                        .rows()
                        .iter()
                        .map(|row| {
                            let support: Vec<usize> = (0..row.len())
                                .filter(|&u| row.get(u) > 0.0)
                                .collect();
                            let mut w = vec![0.0; row.len()];
                            for &u in &support {
                                w[u] = 1.0 / support.len() as f64;
                            }
                            Pmf::new(w).expect("uniform row is stochastic")
                        })
                        .collect();
                    ConditionalPmf::new(rows).expect("same shape as reference")
                })
                .collect();
            Ok(PolicySequence::new(stages))
        }
        InitMode::Custom(seq) => {
            spec.check_policy(seq)?;
            Ok(seq.clone())
        }
    }
}

/// Serialized policy file: solved policy plus the iteration report summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    /// `policy[k][x]` -> row over actions; 1-based stage keys.
    pub policy: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: Some(path.display().to_string()),
        message: format!("line {}, column {}: {}", e.line(), e.column(), e),
    })
}

pub fn save_problem(path: &Path, spec: &ProblemSpec) -> Result<()> {
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::Parse {
        context: Some(path.display().to_string()),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn policy_to_file(policies: &PolicySequence, report: Option<serde_json::Value>) -> PolicyFile {
    let mut map = BTreeMap::new();
    for (idx, table) in policies.stages().iter().enumerate() {
        map.insert(
            (idx + 1).to_string(),
            table
                .rows()
                .iter()
                .map(|row| row.weights().to_vec())
                .collect(),
        );
    }
    PolicyFile {
        policy: map,
        report,
    }
}

/// Writes the solved policy (and optional report summary) as JSON.
///
/// Floats are written in shortest round-trip decimal form, so a save/load
/// cycle reproduces the weights bit-exactly.
pub fn save_policy(
    path: &Path,
    policies: &PolicySequence,
    report: Option<serde_json::Value>,
) -> Result<()> {
    let file = policy_to_file(policies, report);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse {
        context: Some(path.display().to_string()),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicySequence> {
    let text = std::fs::read_to_string(path)?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: Some(path.display().to_string()),
        message: format!("line {}, column {}: {}", e.line(), e.column(), e),
    })?;
    let mut stages = Vec::new();
    // Keys are strings, so iterate numerically rather than in map order
    // (lexicographic order breaks past stage 9).
    for k in 1..=file.policy.len() {
        let rows = file.policy.get(&k.to_string()).ok_or_else(|| Error::Parse {
            context: Some(path.display().to_string()),
            message: format!("policy stages must be contiguous 1-based keys, missing {k}"),
        })?;
        let pmfs: Result<Vec<Pmf>> = rows.iter().map(|row| Pmf::new(row.clone())).collect();
        stages.push(ConditionalPmf::new(pmfs?)?);
    }
    Ok(PolicySequence::new(stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{self, SplitMix64};

    #[test]
    fn well_formed_spec_is_accepted() {
        let spec = testutil::matched_reference_spec(2, 2, 2, 2.0);
        let v = validate(&spec).unwrap();
        assert_eq!(v.horizon, 2);
        assert_eq!(v.n_states(), 2);
        assert_eq!(v.n_actions(), 2);
    }

    #[test]
    fn non_stochastic_row_is_rejected_with_location() {
        let mut spec = testutil::matched_reference_spec(2, 2, 2, 2.0);
        spec.plant.get_mut("2").unwrap()[1] = vec![0.4, 0.5];
        match validate(&spec) {
            Err(Error::Validation { issues }) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].field, "plant");
                assert_eq!(issues[0].stage, Some(2));
                assert_eq!(issues[0].row, Some(1));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn absolute_continuity_violation_is_rejected() {
        let mut spec = testutil::matched_reference_spec(2, 2, 2, 2.0);
        // Reference plant forbids outcome 1 in one row while the plant keeps mass there.
        spec.ref_plant.get_mut("1").unwrap()[0] = vec![1.0, 0.0];
        spec.plant.get_mut("1").unwrap()[0] = vec![0.5, 0.5];
        match validate(&spec) {
            Err(Error::Validation { issues }) => {
                assert!(issues.iter().any(|i| i.field == "plant" && i.stage == Some(1)));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn near_stochastic_rows_are_renormalized() {
        let mut spec = testutil::matched_reference_spec(2, 2, 1, 2.0);
        spec.prior = vec![0.5 + 2e-10, 0.5];
        let v = validate(&spec).unwrap();
        let sum: f64 = v.prior.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_modes() {
        let mut spec = testutil::matched_reference_spec(2, 4, 1, 2.0);
        // Restrict one reference row's support.
        spec.ref_policy.get_mut("1").unwrap()[1] = vec![0.5, 0.5, 0.0, 0.0];
        let v = validate(&spec).unwrap();

        let reference = init_policies(&v, &IterationConfig::default()).unwrap();
        assert_eq!(reference.stage(1), v.ref_policy_stage(1));

        let uniform_cfg = IterationConfig {
            init_mode: InitMode::Uniform,
            ..Default::default()
        };
        let uniform = init_policies(&v, &uniform_cfg).unwrap();
        assert_eq!(uniform.stage(1).row(0).weights(), &[0.25; 4]);
        assert_eq!(uniform.stage(1).row(1).weights(), &[0.5, 0.5, 0.0, 0.0]);

        // Custom mass outside the reference support is refused.
        let mut bad = v.reference_policies();
        let rows = vec![
            bad.stage(1).row(0).clone(),
            Pmf::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap(),
        ];
        bad = PolicySequence::new(vec![ConditionalPmf::new(rows).unwrap()]);
        let custom_cfg = IterationConfig {
            init_mode: InitMode::Custom(bad),
            ..Default::default()
        };
        match init_policies(&v, &custom_cfg) {
            Err(Error::SupportViolation { stage: 1, row: 1, action: 2, .. }) => {}
            other => panic!("expected support violation, got {other:?}"),
        }
    }

    #[test]
    fn problem_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problem.json");
        let mut rng = SplitMix64::new(11);
        let spec = testutil::random_problem_spec(&mut rng, 2, 2, 3, 2.0);
        save_problem(&path, &spec).unwrap();
        let loaded = load_problem(&path).unwrap();
        assert_eq!(spec, loaded);
    }

    #[test]
    fn policy_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let mut rng = SplitMix64::new(12);
        let spec = testutil::random_problem_spec(&mut rng, 2, 3, 2, 2.0);
        let v = validate(&spec).unwrap();
        let pols = v.reference_policies();
        save_policy(&path, &pols, None).unwrap();
        let loaded = load_policy(&path).unwrap();
        assert_eq!(pols, loaded);
    }

    #[test]
    fn canonical_docs_example_parses_and_validates() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../docs/example_problem.json");
        let spec = load_problem(&path).unwrap();
        assert_eq!(spec.r, 2.0);
        assert_eq!(spec.horizon, 2);
        assert_eq!(spec.states, vec!["low", "high"]);
        assert_eq!(spec.actions, vec!["hold", "push"]);
        let v = validate(&spec).unwrap();
        assert_eq!(v.solver.omega, 0.4);
        // Round-trips bit-exactly through save/load.
        let dir = tempfile::tempdir().unwrap();
        let copy = dir.path().join("copy.json");
        save_problem(&copy, &spec).unwrap();
        assert_eq!(load_problem(&copy).unwrap(), spec);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\"r\": 2.0, \"horizon\":").unwrap();
        match load_problem(&path) {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
