//! Brute-force reference engines.
//!
//! Everything here is deliberately independent of the decision kernel: a
//! depth-first sigma-path search that carries the prefix edge set and
//! re-checks the label containment at every extension, plus an exhaustive
//! truth-table SAT check. These are the ground truth the fast kernel is
//! differentially tested against, so they must stay simple enough to audit
//! by eye.

use crate::graph::{EdgeSet, MultiStageGraph, VertexId};
use std::time::Instant;

/// Caps on the exhaustive search. A search that exhausts either cap
/// reports [`OracleDecision::Unknown`] rather than guessing.
#[derive(Debug, Clone, Copy)]
pub struct OracleBudget {
    /// Maximum number of edge extensions attempted.
    pub max_nodes: u64,
    /// Wall-clock cap in milliseconds.
    pub max_millis: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_nodes: 10_000_000,
            max_millis: 30_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleDecision {
    Yes,
    No,
    /// The budget ran out before the search space was covered.
    Unknown,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("budget exhausted after {nodes} search nodes")]
    BudgetExceeded { nodes: u64 },
    #[error("{0} variables exceed the exhaustive limit of 24")]
    TooManyVariables(usize),
}

struct Search<'g> {
    g: &'g MultiStageGraph,
    budget: OracleBudget,
    started: Instant,
    nodes: u64,
    exhausted: bool,
}

impl<'g> Search<'g> {
    fn new(g: &'g MultiStageGraph, budget: OracleBudget) -> Self {
        Search {
            g,
            budget,
            started: Instant::now(),
            nodes: 0,
            exhausted: false,
        }
    }

    fn spend(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget.max_nodes {
            self.exhausted = true;
            return false;
        }
        // Check the clock sparingly; Instant::now is not free.
        if self.nodes.is_multiple_of(1024)
            && self.started.elapsed().as_millis() as u64 > self.budget.max_millis
        {
            self.exhausted = true;
            return false;
        }
        true
    }

    /// Extends the prefix ending at `at` along every label-admissible edge,
    /// in edge-id order. `sink_hit` collects complete paths; returning
    /// `true` stops the search early (existence mode).
    fn dfs(
        &mut self,
        at: VertexId,
        prefix: &mut EdgeSet,
        stop_at_first: bool,
        found: &mut Vec<EdgeSet>,
    ) -> bool {
        if at == self.g.sink() {
            found.push(prefix.clone());
            return stop_at_first;
        }
        for &e in self.g.out_edges(at) {
            if self.exhausted || !self.spend() {
                return false;
            }
            let head = self.g.edge(e).head;
            prefix.insert(e);
            // The prefix that arrives at `head` must sit inside its label.
            if prefix.is_subset_of(self.g.label(head))
                && self.dfs(head, prefix, stop_at_first, found)
            {
                prefix.remove(e);
                return true;
            }
            prefix.remove(e);
        }
        false
    }
}

/// Exhaustive sigma-path existence check, independent of the kernel.
pub fn sigma_path_exists(g: &MultiStageGraph, budget: OracleBudget) -> OracleDecision {
    let mut search = Search::new(g, budget);
    let mut found = Vec::new();
    let mut prefix = g.empty_edge_set();
    search.dfs(g.source(), &mut prefix, true, &mut found);
    if !found.is_empty() {
        OracleDecision::Yes
    } else if search.exhausted {
        OracleDecision::Unknown
    } else {
        OracleDecision::No
    }
}

/// Enumerates every sigma path, in depth-first edge-id order.
///
/// Errors with [`OracleError::BudgetExceeded`] when the budget runs out, in
/// which case the enumeration would have been incomplete.
pub fn enumerate_sigma_paths(
    g: &MultiStageGraph,
    budget: OracleBudget,
) -> Result<Vec<EdgeSet>, OracleError> {
    let mut search = Search::new(g, budget);
    let mut found = Vec::new();
    let mut prefix = g.empty_edge_set();
    search.dfs(g.source(), &mut prefix, false, &mut found);
    if search.exhausted {
        return Err(OracleError::BudgetExceeded {
            nodes: search.nodes,
        });
    }
    Ok(found)
}

/// A CNF clause: nonzero literals, negative for negated variables.
pub type Clause = Vec<i32>;

/// Exhaustive satisfiability check by truth table, up to 24 variables.
///
/// Assignments are scanned in ascending bitmask order (bit `i` is variable
/// `i + 1`), so the first satisfying assignment is deterministic.
pub fn sat_brute_force(num_vars: usize, clauses: &[Clause]) -> Result<Option<Vec<bool>>, OracleError> {
    if num_vars > 24 {
        return Err(OracleError::TooManyVariables(num_vars));
    }
    'outer: for mask in 0u64..(1u64 << num_vars) {
        for clause in clauses {
            let sat = clause.iter().any(|&lit| {
                let var = lit.unsigned_abs() as usize - 1;
                (mask >> var & 1 == 1) == (lit > 0)
            });
            if !sat {
                continue 'outer;
            }
        }
        return Ok(Some((0..num_vars).map(|i| mask >> i & 1 == 1).collect()));
    }
    Ok(None)
}
