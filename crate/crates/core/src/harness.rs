//! Differential-testing harness: runs the polynomial kernel and the
//! exhaustive oracle on the same instances, classifies agreement, and
//! shrinks disagreements to small cores.
//!
//! The two engines have asymmetric standing. The kernel's final set
//! provably contains every sigma path, so an oracle "yes" against a
//! kernel "no" ([`AgreementClass::NecessityViolation`]) is a fatal
//! implementation bug. The reverse disagreement, kernel "yes" against an
//! exhaustive oracle "no" ([`AgreementClass::SufficiencyDisagreement`]),
//! is the interesting research outcome: a witness against the claim that
//! a nonempty kernel implies a sigma path. Those are archived and
//! minimized, never panicked over.

use crate::format::Provenance;
use crate::graph::{build_graph, EdgeId, GraphSpec, MultiStageGraph};
use crate::kernel::{zh_solve, Decision, ZhOptions, SWEEP_ORDER};
use crate::oracle::{sigma_path_exists, OracleBudget, OracleDecision};
use crate::reduction::CnfFormula;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementClass {
    AgreeYes,
    AgreeNo,
    /// Oracle found a sigma path the kernel ruled out: a soundness bug.
    NecessityViolation,
    /// Kernel kept a nonempty set on an exhaustively refuted instance.
    SufficiencyDisagreement,
    /// Oracle ran out of budget; no claim either way.
    OracleUnknown,
}

pub fn classify(zh: Decision, oracle: OracleDecision) -> AgreementClass {
    match (zh, oracle) {
        (Decision::Yes, OracleDecision::Yes) => AgreementClass::AgreeYes,
        (Decision::No, OracleDecision::No) => AgreementClass::AgreeNo,
        (Decision::No, OracleDecision::Yes) => AgreementClass::NecessityViolation,
        (Decision::Yes, OracleDecision::No) => AgreementClass::SufficiencyDisagreement,
        (_, OracleDecision::Unknown) => AgreementClass::OracleUnknown,
    }
}

/// One instance's differential outcome, serialized as a JSONL row in
/// campaign logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRecord {
    /// Campaign-assigned id, stable across reruns of the same config.
    pub instance: String,
    /// Content hash of the instance document.
    pub content_hash: String,
    pub provenance: Provenance,
    pub zh_decision: Decision,
    pub oracle_decision: OracleDecision,
    pub agreement: AgreementClass,
    pub kernel_size: usize,
    pub passes: u32,
    pub prune_events: u64,
    pub initial_support: u64,
    pub sweep_order: String,
    pub zh_millis: u64,
    pub oracle_millis: u64,
    /// Oracle budget failure detail, when the oracle gave up.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs both engines on one instance and classifies the outcome.
pub fn run_one(
    instance: &str,
    provenance: Provenance,
    g: &MultiStageGraph,
    budget: OracleBudget,
) -> VerdictRecord {
    let out = zh_solve(g, ZhOptions::default()).expect("permissive solve cannot reject");
    let oracle_started = Instant::now();
    let oracle_decision = sigma_path_exists(g, budget);
    let oracle_millis = oracle_started.elapsed().as_millis() as u64;
    let error = (oracle_decision == OracleDecision::Unknown)
        .then(|| "oracle budget exhausted".to_string());
    VerdictRecord {
        instance: instance.to_string(),
        content_hash: crate::format::to_doc(g, provenance.clone()).content_hash,
        provenance,
        zh_decision: out.decision,
        oracle_decision,
        agreement: classify(out.decision, oracle_decision),
        kernel_size: out.stats.kernel_size,
        passes: out.stats.passes,
        prune_events: out.stats.prune_events,
        initial_support: out.stats.initial_support,
        sweep_order: SWEEP_ORDER.to_string(),
        zh_millis: out.wall_millis,
        oracle_millis,
        error,
    }
}

/// Worker count: the `MSP_WORKERS` environment variable wins, then the
/// explicit request, then available parallelism capped at eight.
pub fn effective_workers(requested: Option<usize>) -> usize {
    if let Ok(text) = std::env::var("MSP_WORKERS") {
        if let Ok(n) = text.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    requested.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(8)
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub total: usize,
    pub agree_yes: usize,
    pub agree_no: usize,
    pub necessity_violations: usize,
    pub sufficiency_disagreements: usize,
    pub oracle_unknown: usize,
    pub max_zh_millis: u64,
    pub max_passes: u32,
}

impl CampaignSummary {
    pub fn tally(records: &[VerdictRecord]) -> CampaignSummary {
        let mut s = CampaignSummary {
            total: records.len(),
            ..Default::default()
        };
        for r in records {
            match r.agreement {
                AgreementClass::AgreeYes => s.agree_yes += 1,
                AgreementClass::AgreeNo => s.agree_no += 1,
                AgreementClass::NecessityViolation => s.necessity_violations += 1,
                AgreementClass::SufficiencyDisagreement => s.sufficiency_disagreements += 1,
                AgreementClass::OracleUnknown => s.oracle_unknown += 1,
            }
            s.max_zh_millis = s.max_zh_millis.max(r.zh_millis);
            s.max_passes = s.max_passes.max(r.passes);
        }
        s
    }
}

/// Runs the differential pair over every job on a small thread pool.
/// Results come back in job order regardless of scheduling, so campaign
/// logs are deterministic up to timing fields.
pub fn run_campaign(
    jobs: &[(String, Provenance, MultiStageGraph)],
    budget: OracleBudget,
    workers: usize,
) -> Vec<VerdictRecord> {
    let workers = workers.clamp(1, jobs.len().max(1));
    if workers == 1 {
        return jobs
            .iter()
            .map(|(id, p, g)| run_one(id, p.clone(), g, budget))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, VerdictRecord)>();
    let mut slots: Vec<Option<VerdictRecord>> = vec![None; jobs.len()];
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, p, g)) = jobs.get(i) else { break };
                let record = run_one(id, p.clone(), g, budget);
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, record) in rx {
            slots[i] = Some(record);
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every job produces a record"))
        .collect()
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MinimizeError {
    #[error("predicate does not hold on the input")]
    PredicateNeverHeld,
    #[error("predicate is flaky: two evaluations on the same input disagreed")]
    PredicateFlaky,
}

fn check_predicate<T, P: FnMut(&T) -> bool>(input: &T, predicate: &mut P) -> Result<(), MinimizeError> {
    match (predicate(input), predicate(input)) {
        (true, true) => Ok(()),
        (false, false) => Err(MinimizeError::PredicateNeverHeld),
        _ => Err(MinimizeError::PredicateFlaky),
    }
}

/// Shrinks a graph while the predicate keeps holding. Moves: remove one
/// edge (with label ids remapped), then remove one label entry. A
/// candidate is admissible when it still builds; structural hygiene
/// beyond that is the predicate's concern. The result is 1-minimal: no
/// single remaining move preserves the predicate.
pub fn minimize_msp<P: FnMut(&MultiStageGraph) -> bool>(
    g: &MultiStageGraph,
    mut predicate: P,
) -> Result<MultiStageGraph, MinimizeError> {
    check_predicate(g, &mut predicate)?;
    let mut current = g.clone();
    loop {
        let mut improved = false;

        // Edge removal, highest id first so earlier ids stay stable.
        let mut e = current.num_edges();
        while e > 0 {
            e -= 1;
            let spec = current.to_spec();
            let Some(candidate) = drop_edge(&spec, e) else { continue };
            let Ok(built) = build_graph(&candidate) else { continue };
            if predicate(&built) {
                current = built;
                improved = true;
                e = e.min(current.num_edges());
            }
        }

        // Label shrinking, vertex by vertex, highest edge id first.
        for v in current.vertices().skip(1).collect::<Vec<_>>() {
            let members: Vec<EdgeId> = current.label(v).to_vec();
            for id in members.into_iter().rev() {
                let mut label = current.label(v).clone();
                label.remove(id);
                let mut candidate = current.clone();
                candidate.set_label(v, label);
                if predicate(&candidate) {
                    current = candidate;
                    improved = true;
                }
            }
        }

        if !improved {
            return Ok(current);
        }
    }
}

/// Drops edge `index` (canonical id) from a spec, remapping label ids.
/// Returns `None` when the edge is already gone.
fn drop_edge(spec: &GraphSpec, index: usize) -> Option<GraphSpec> {
    if index >= spec.edges.len() {
        return None;
    }
    let mut out = spec.clone();
    out.edges.remove(index);
    for ids in out.labels.values_mut() {
        ids.retain(|&id| id != index);
        for id in ids.iter_mut() {
            if *id > index {
                *id -= 1;
            }
        }
    }
    Some(out)
}

/// Shrinks a formula while the predicate keeps holding. Moves: remove one
/// clause, then eliminate one variable by fixing it to a polarity
/// (dropping satisfied clauses and renumbering). Candidates that would
/// create an empty clause or an empty formula are skipped; a fixing that
/// would change clause widths is only applied through clause removal, so
/// uniform-width predicates see uniform candidates. The result is
/// 1-minimal over these moves.
pub fn minimize_cnf<P: FnMut(&CnfFormula) -> bool>(
    f: &CnfFormula,
    mut predicate: P,
) -> Result<CnfFormula, MinimizeError> {
    check_predicate(f, &mut predicate)?;
    let mut current = f.clone();
    loop {
        let mut improved = false;

        let mut i = current.clauses.len();
        while i > 0 {
            i -= 1;
            if current.clauses.len() == 1 {
                break;
            }
            let mut candidate = current.clone();
            candidate.clauses.remove(i);
            if predicate(&candidate) {
                current = candidate;
                improved = true;
            }
        }

        for var in (1..=current.num_vars as i32).rev() {
            for value in [true, false] {
                let Some(candidate) = fix_variable(&current, var, value) else { continue };
                if predicate(&candidate) {
                    current = candidate;
                    improved = true;
                    break;
                }
            }
        }

        if !improved {
            return Ok(current);
        }
    }
}

/// Fixes `var` to `value`: satisfied clauses are removed whole; clauses
/// where the variable appears falsified are kept with the literal intact
/// only if width must be preserved, so instead such clauses make the
/// candidate inadmissible. Remaining variables are renumbered densely.
fn fix_variable(f: &CnfFormula, var: i32, value: bool) -> Option<CnfFormula> {
    let satisfied = if value { var } else { -var };
    let falsified = -satisfied;
    let mut clauses = Vec::new();
    for clause in &f.clauses {
        if clause.contains(&satisfied) {
            continue;
        }
        if clause.contains(&falsified) {
            // Removing the literal would change the clause width; treat
            // the fixing as inadmissible instead of shrinking the clause.
            return None;
        }
        clauses.push(clause.clone());
    }
    if clauses.is_empty() {
        return None;
    }
    // Renumber densely over the variables that still occur.
    let mut used: Vec<i32> = clauses
        .iter()
        .flatten()
        .map(|l| l.abs())
        .collect();
    used.sort_unstable();
    used.dedup();
    let index_of = |v: i32| used.binary_search(&v).unwrap() as i32 + 1;
    let clauses = clauses
        .into_iter()
        .map(|c| c.into_iter().map(|l| l.signum() * index_of(l.abs())).collect())
        .collect();
    Some(CnfFormula {
        num_vars: used.len(),
        clauses,
    })
}
