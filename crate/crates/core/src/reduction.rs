//! CNF formulas, DIMACS I/O, and reductions into labeled multi-stage
//! graphs.
//!
//! Two constructions are provided. [`reduce_plain`] builds one stage per
//! clause with full bipartite wiring between consecutive stages; a path
//! picks one literal per clause, and every literal vertex's label excludes
//! all edges incident to occurrences of the complementary literal, so
//! sigma paths correspond exactly to satisfying assignments. The output is
//! a valid labeled multi-stage graph but, for clause width above two, not
//! a 2-MSP: clause vertices take in-edges from every vertex of the
//! previous stage.
//!
//! [`reduce_full`] targets the restricted class. It interleaves coupler
//! stages between consecutive clause stages so that every vertex keeps
//! in-degree at most two while any literal of one clause can still reach
//! any literal of the next, and appends a single-in collector column
//! before the sink so the last interior stage has in-degree one. Coupler
//! and collector labels are full, so only the literal labels constrain
//! paths and the same correspondence argument applies: the graph has a
//! sigma path if and only if the formula is satisfiable.

use crate::graph::{
    build_graph_with_min_stages, EdgeSet, GraphError, MultiStageGraph, VertexId,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// A CNF formula. Literals are nonzero integers, DIMACS style: `v` for
/// the variable, `-v` for its negation, `1 <= v <= num_vars`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CnfError {
    #[error("clause {index} is empty")]
    EmptyClause { index: usize },
    #[error("clause {index} holds literal {lit}, outside 1..={num_vars}")]
    LiteralOutOfRange { index: usize, lit: i32, num_vars: usize },
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, CnfError> {
        let f = CnfFormula { num_vars, clauses };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), CnfError> {
        for (index, clause) in self.clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(CnfError::EmptyClause { index });
            }
            for &lit in clause {
                if lit == 0 || lit.unsigned_abs() as usize > self.num_vars {
                    return Err(CnfError::LiteralOutOfRange {
                        index,
                        lit,
                        num_vars: self.num_vars,
                    });
                }
            }
        }
        Ok(())
    }

    /// Uniform clause width, if there is one.
    pub fn uniform_width(&self) -> Option<usize> {
        let mut widths = self.clauses.iter().map(Vec::len);
        let first = widths.next()?;
        widths.all(|w| w == first).then_some(first)
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        assert!(assignment.len() >= self.num_vars);
        self.clauses.iter().all(|clause| {
            clause.iter().any(|&lit| {
                let value = assignment[lit.unsigned_abs() as usize - 1];
                (lit > 0) == value
            })
        })
    }
}

/// Rewrites a formula to uniform clause width three, preserving
/// satisfiability. Short clauses repeat their last literal; long clauses
/// are chained through fresh variables.
pub fn split_to_3cnf(f: &CnfFormula) -> CnfFormula {
    let mut num_vars = f.num_vars;
    let mut clauses = Vec::new();
    for clause in &f.clauses {
        match clause.len() {
            0 => unreachable!("validated formulas have no empty clauses"),
            1 => clauses.push(vec![clause[0], clause[0], clause[0]]),
            2 => clauses.push(vec![clause[0], clause[1], clause[1]]),
            3 => clauses.push(clause.clone()),
            n => {
                // (l1 l2 y1)(−y1 l3 y2)…(−y_{n−3} l_{n−1} l_n)
                num_vars += 1;
                let mut link = num_vars as i32;
                clauses.push(vec![clause[0], clause[1], link]);
                for &lit in &clause[2..n - 2] {
                    num_vars += 1;
                    let next = num_vars as i32;
                    clauses.push(vec![-link, lit, next]);
                    link = next;
                }
                clauses.push(vec![-link, clause[n - 2], clause[n - 1]]);
            }
        }
    }
    CnfFormula { num_vars, clauses }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {line}: missing 'p cnf <vars> <clauses>' header before clause data")]
    MissingHeader { line: usize },
    #[error("line {line}: malformed header {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("line {line}: token {token:?} is not a literal")]
    BadToken { line: usize, token: String },
    #[error("line {line}: literal {lit} outside declared range 1..={num_vars}")]
    LiteralOutOfRange { line: usize, lit: i32, num_vars: usize },
    #[error("clause {index} is empty")]
    EmptyClause { index: usize },
    #[error("last clause is not terminated by 0")]
    UnterminatedClause,
    #[error("header declares {declared} clauses but {found} were read")]
    ClauseCountMismatch { declared: usize, found: usize },
}

/// Parses DIMACS CNF. `strict` additionally enforces the header's clause
/// count; both modes enforce the variable range. Comment lines (`c`) are
/// skipped and a `%` line ends the input, as in common benchmark files.
pub fn parse_dimacs(text: &str, strict: bool) -> Result<CnfFormula, DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if trimmed.starts_with('%') {
            break;
        }
        if trimmed.starts_with('p') {
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            let parsed = (parts.len() == 4 && parts[1] == "cnf")
                .then(|| Some((parts[2].parse().ok()?, parts[3].parse().ok()?)))
                .flatten();
            match parsed {
                Some(h) => header = Some(h),
                None => {
                    return Err(DimacsError::BadHeader {
                        line,
                        text: trimmed.to_string(),
                    })
                }
            }
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(DimacsError::MissingHeader { line });
        };
        for token in trimmed.split_whitespace() {
            let lit: i32 = token
                .parse()
                .map_err(|_| DimacsError::BadToken {
                    line,
                    token: token.to_string(),
                })?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(DimacsError::EmptyClause { index: clauses.len() });
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            if lit.unsigned_abs() as usize > num_vars {
                return Err(DimacsError::LiteralOutOfRange { line, lit, num_vars });
            }
            current.push(lit);
        }
    }
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause);
    }
    let (num_vars, declared) = header.ok_or(DimacsError::MissingHeader { line: 0 })?;
    if strict && declared != clauses.len() {
        return Err(DimacsError::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    Ok(CnfFormula { num_vars, clauses })
}

pub fn emit_dimacs(f: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", f.num_vars, f.clauses.len());
    for clause in &f.clauses {
        for lit in clause {
            let _ = write!(out, "{lit} ");
        }
        let _ = writeln!(out, "0");
    }
    out
}

/// What a vertex of a reduced graph stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "role")]
pub enum VertexRole {
    Source,
    Sink,
    /// Occurrence of `literal` at `position` within clause `clause`
    /// (both zero-based).
    Literal { clause: usize, position: usize, literal: i32 },
    /// Coupler vertex routing clause `after_clause` to the next one;
    /// `pair` names the two positions it connects on both sides.
    Coupler { after_clause: usize, pair: (usize, usize) },
    /// Single-in collector column between the last clause and the sink.
    Collector { position: usize },
}

/// Vertex-by-vertex account of a reduction, enough to translate sigma
/// paths back into assignments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionMap {
    pub num_vars: usize,
    pub roles: Vec<VertexRole>,
}

impl ReductionMap {
    pub fn role(&self, v: VertexId) -> VertexRole {
        self.roles[v.0]
    }

    /// Reads an assignment off a sigma path. Unconstrained variables
    /// default to false. Returns `None` if the path visits both polarities
    /// of some variable, which a sigma path of a reduced graph never does.
    pub fn decode_assignment(&self, g: &MultiStageGraph, path: &EdgeSet) -> Option<Vec<bool>> {
        let mut assignment = vec![false; self.num_vars];
        let mut pinned = vec![false; self.num_vars];
        for e in path.iter() {
            for v in [g.edge(e).tail, g.edge(e).head] {
                if let VertexRole::Literal { literal, .. } = self.role(v) {
                    let var = literal.unsigned_abs() as usize - 1;
                    let value = literal > 0;
                    if pinned[var] && assignment[var] != value {
                        return None;
                    }
                    assignment[var] = value;
                    pinned[var] = true;
                }
            }
        }
        Some(assignment)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    #[error("formula has no clauses")]
    EmptyFormula,
    #[error("formula has {found} clauses but this construction needs at least {need}; rerun permissive to pad by clause duplication")]
    TooFewClauses { found: usize, need: usize },
    #[error("clause widths differ ({widths:?}); the degree-bounded construction needs uniform width")]
    NonUniformWidth { widths: Vec<usize> },
    #[error("clause width {width} unsupported; the degree-bounded construction covers widths 2 and 3")]
    UnsupportedWidth { width: usize },
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error("reduction emitted a malformed graph: {0}")]
    Internal(#[from] GraphError),
}

/// Pads a formula to at least `need` clauses by duplicating the last
/// clause, which never changes satisfiability.
fn pad_clauses(f: &CnfFormula, need: usize, strict: bool) -> Result<CnfFormula, ReductionError> {
    if f.clauses.is_empty() {
        return Err(ReductionError::EmptyFormula);
    }
    if f.clauses.len() >= need {
        return Ok(f.clone());
    }
    if strict {
        return Err(ReductionError::TooFewClauses {
            found: f.clauses.len(),
            need,
        });
    }
    let mut padded = f.clone();
    while padded.clauses.len() < need {
        padded.clauses.push(f.clauses.last().unwrap().clone());
    }
    Ok(padded)
}

/// Applies the complementary-literal label rule: every literal vertex's
/// label is the full edge set minus all edges incident to occurrences of
/// the complementary literal. All other labels stay full. A path prefix
/// then fits a literal vertex's label exactly when no earlier step touched
/// a complementary occurrence.
fn apply_literal_labels(g: &mut MultiStageGraph, roles: &[VertexRole]) {
    let full = g.full_edge_set();
    // Edges incident to any occurrence of each signed literal.
    let mut incident: std::collections::BTreeMap<i32, EdgeSet> = std::collections::BTreeMap::new();
    for v in g.vertices() {
        if let VertexRole::Literal { literal, .. } = roles[v.0] {
            let entry = incident
                .entry(literal)
                .or_insert_with(|| g.empty_edge_set());
            for &e in g.in_edges(v) {
                entry.insert(e);
            }
            for &e in g.out_edges(v) {
                entry.insert(e);
            }
        }
    }
    for v in g.vertices() {
        if let VertexRole::Literal { literal, .. } = roles[v.0] {
            let mut label = full.clone();
            if let Some(bad) = incident.get(&-literal) {
                label.subtract_with(bad);
            }
            g.set_label(v, label);
        }
    }
}

fn full_label_spec(stage_sizes: &[usize], num_edges: usize) -> std::collections::BTreeMap<(usize, usize), Vec<usize>> {
    let mut labels = std::collections::BTreeMap::new();
    for (stage, &size) in stage_sizes.iter().enumerate().skip(1) {
        for pos in 0..size {
            labels.insert((stage, pos), (0..num_edges).collect());
        }
    }
    labels
}

/// One stage per clause, fully bipartite between consecutive stages,
/// complementary-literal labels. Sigma paths correspond one-to-one with
/// clause-consistent literal selections, hence with satisfying
/// assignments. Needs at least four clauses for the minimum stage count;
/// permissive mode pads by duplicating the last clause.
pub fn reduce_plain(
    f: &CnfFormula,
    strict: bool,
) -> Result<(MultiStageGraph, ReductionMap), ReductionError> {
    f.validate()?;
    let f = pad_clauses(f, 4, strict)?;
    let m = f.clauses.len();

    let mut stage_sizes = vec![1usize];
    stage_sizes.extend(f.clauses.iter().map(Vec::len));
    stage_sizes.push(1);

    let mut edges = Vec::new();
    for j in 0..f.clauses[0].len() {
        edges.push((0, j, 1));
    }
    for i in 1..m {
        for a in 0..f.clauses[i - 1].len() {
            for b in 0..f.clauses[i].len() {
                edges.push((a, b, i + 1));
            }
        }
    }
    for a in 0..f.clauses[m - 1].len() {
        edges.push((a, 0, m + 1));
    }
    let num_edges = edges.len();

    let spec = crate::graph::GraphSpec {
        stage_sizes: stage_sizes.clone(),
        edges,
        labels: full_label_spec(&stage_sizes, num_edges),
    };
    let mut g = build_graph_with_min_stages(&spec, 5)?;

    let mut roles = vec![VertexRole::Source];
    for (clause, lits) in f.clauses.iter().enumerate() {
        for (position, &literal) in lits.iter().enumerate() {
            roles.push(VertexRole::Literal { clause, position, literal });
        }
    }
    roles.push(VertexRole::Sink);
    debug_assert_eq!(roles.len(), g.num_vertices());
    apply_literal_labels(&mut g, &roles);

    let expected_edges = f.clauses[0].len()
        + (1..m).map(|i| f.clauses[i - 1].len() * f.clauses[i].len()).sum::<usize>()
        + f.clauses[m - 1].len();
    assert_eq!(g.num_edges(), expected_edges);

    Ok((g, ReductionMap { num_vars: f.num_vars, roles }))
}

/// Coupler wiring between two width-`k` clause stages: each coupler
/// vertex joins a pair of positions on both sides. For width 3 the three
/// couplers take the position pairs in lexicographic order; for width 2
/// both couplers connect to both positions. Either way every position of
/// the lower clause reaches every position of the upper one, and all
/// degrees stay at two.
fn coupler_pairs(k: usize) -> Vec<(usize, usize)> {
    match k {
        2 => vec![(0, 1), (0, 1)],
        3 => vec![(0, 1), (0, 2), (1, 2)],
        _ => unreachable!("width checked by caller"),
    }
}

/// The degree-bounded construction: clause stages interleaved with
/// coupler stages, a collector column before the sink, complementary-
/// literal labels. The output validates as a 2-MSP, and sigma paths
/// correspond exactly to satisfying assignments. Needs uniform clause
/// width 2 or 3 and at least two clauses; permissive mode pads short
/// formulas by duplicating the last clause.
pub fn reduce_full(
    f: &CnfFormula,
    strict: bool,
) -> Result<(MultiStageGraph, ReductionMap), ReductionError> {
    f.validate()?;
    if f.clauses.is_empty() {
        return Err(ReductionError::EmptyFormula);
    }
    let k = f
        .uniform_width()
        .ok_or_else(|| ReductionError::NonUniformWidth {
            widths: f.clauses.iter().map(Vec::len).collect(),
        })?;
    if !(k == 2 || k == 3) {
        return Err(ReductionError::UnsupportedWidth { width: k });
    }
    let f = pad_clauses(f, 2, strict)?;
    let m = f.clauses.len();
    let pairs = coupler_pairs(k);
    let a = pairs.len();

    // Stages: source, then clause/coupler alternation, collectors, sink.
    // Clause i (zero-based) sits at stage 2i+1, the coupler after it at
    // stage 2i+2, the collectors at stage 2m, the sink at stage 2m+1.
    let mut stage_sizes = vec![1usize];
    for _ in 0..m - 1 {
        stage_sizes.push(k);
        stage_sizes.push(a);
    }
    stage_sizes.push(k);
    stage_sizes.push(k);
    stage_sizes.push(1);

    let mut edges = Vec::new();
    for j in 0..k {
        edges.push((0, j, 1));
    }
    for i in 0..m - 1 {
        let coupler_stage = 2 * i + 2;
        for (t, &(p, q)) in pairs.iter().enumerate() {
            edges.push((p, t, coupler_stage));
            edges.push((q, t, coupler_stage));
            edges.push((t, p, coupler_stage + 1));
            edges.push((t, q, coupler_stage + 1));
        }
    }
    for j in 0..k {
        edges.push((j, j, 2 * m));
        edges.push((j, 0, 2 * m + 1));
    }
    let num_edges = edges.len();
    assert_eq!(num_edges, k + (m - 1) * 4 * a + 2 * k);

    let spec = crate::graph::GraphSpec {
        stage_sizes: stage_sizes.clone(),
        edges,
        labels: full_label_spec(&stage_sizes, num_edges),
    };
    let mut g = build_graph_with_min_stages(&spec, 5)?;

    let mut roles = vec![VertexRole::Source];
    for i in 0..m {
        for (position, &literal) in f.clauses[i].iter().enumerate() {
            roles.push(VertexRole::Literal { clause: i, position, literal });
        }
        if i < m - 1 {
            for &pair in &pairs {
                roles.push(VertexRole::Coupler { after_clause: i, pair });
            }
        }
    }
    for position in 0..k {
        roles.push(VertexRole::Collector { position });
    }
    roles.push(VertexRole::Sink);
    debug_assert_eq!(roles.len(), g.num_vertices());
    apply_literal_labels(&mut g, &roles);

    assert_eq!(g.last_stage(), 2 * m + 1);
    Ok((g, ReductionMap { num_vars: f.num_vars, roles }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{preprocess, zh_solve, Decision, ZhOptions};
    use crate::oracle::{
        enumerate_sigma_paths, sat_brute_force, sigma_path_exists, OracleBudget, OracleDecision,
    };

    fn cnf(num_vars: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::new(num_vars, clauses.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    /// All four width-2 clauses over two variables: minimally
    /// unsatisfiable.
    fn f2() -> CnfFormula {
        cnf(2, &[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]])
    }

    #[test]
    fn dimacs_round_trip() {
        let f = f2();
        let text = emit_dimacs(&f);
        assert_eq!(parse_dimacs(&text, true).unwrap(), f);
    }

    #[test]
    fn dimacs_accepts_comments_and_percent_footer() {
        let text = "c a comment\np cnf 2 2\n1 -2 0\nc mid comment\n2 0\n%\n0\n";
        let f = parse_dimacs(text, true).unwrap();
        assert_eq!(f.clauses, vec![vec![1, -2], vec![2]]);
    }

    #[test]
    fn dimacs_rejects_malformed_input() {
        assert!(matches!(
            parse_dimacs("1 2 0\n", true),
            Err(DimacsError::MissingHeader { line: 1 })
        ));
        assert!(matches!(
            parse_dimacs("p cnf x 2\n", true),
            Err(DimacsError::BadHeader { line: 1, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 3 0\n", true),
            Err(DimacsError::LiteralOutOfRange { line: 2, lit: 3, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 2\n", true),
            Err(DimacsError::UnterminatedClause)
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 3\n1 0\n", true),
            Err(DimacsError::ClauseCountMismatch { declared: 3, found: 1 })
        ));
        // Permissive mode tolerates the count mismatch only.
        assert!(parse_dimacs("p cnf 2 3\n1 0\n", false).is_ok());
    }

    #[test]
    fn split_to_3cnf_preserves_satisfiability() {
        let cases = [
            cnf(3, &[&[1], &[2, 3], &[1, 2, 3], &[-1, -2, -3, 2]]),
            cnf(5, &[&[1, 2, 3, 4, 5], &[-1, -2, -3, -4, -5]]),
            f2(),
        ];
        for f in cases {
            let g = split_to_3cnf(&f);
            assert_eq!(g.uniform_width(), Some(3));
            g.validate().unwrap();
            let sat_f = sat_brute_force(f.num_vars, &f.clauses).unwrap().is_some();
            let sat_g = sat_brute_force(g.num_vars, &g.clauses).unwrap().is_some();
            assert_eq!(sat_f, sat_g);
        }
    }

    #[test]
    fn plain_reduction_shape() {
        let f = cnf(3, &[&[1, 2, 3], &[-1, 2], &[3], &[-2, -3, 1]]);
        let (g, map) = reduce_plain(&f, true).unwrap();
        assert_eq!(g.last_stage(), 5);
        assert_eq!(g.num_vertices(), 2 + 3 + 2 + 1 + 3);
        assert_eq!(g.num_edges(), 3 + 6 + 2 + 3 + 3);
        assert!(matches!(map.role(g.source()), VertexRole::Source));
        assert!(matches!(map.role(g.sink()), VertexRole::Sink));
        // Sink label is full, literal in-edges from the source survive.
        assert_eq!(g.label(g.sink()), &g.full_edge_set());
    }

    #[test]
    fn plain_reduction_pads_or_rejects_short_formulas() {
        let f = cnf(2, &[&[1, 2], &[-1, 2]]);
        assert!(matches!(
            reduce_plain(&f, true),
            Err(ReductionError::TooFewClauses { found: 2, need: 4 })
        ));
        let (g, _) = reduce_plain(&f, false).unwrap();
        assert_eq!(g.last_stage(), 5);
        // Padding duplicates the last clause; satisfiability matches.
        assert_eq!(
            sigma_path_exists(&g, OracleBudget::default()),
            OracleDecision::Yes
        );
    }

    #[test]
    fn plain_reduction_matches_brute_force_sat() {
        let cases = [
            cnf(2, &[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]]),
            cnf(2, &[&[1, 2], &[-1, 2], &[1, -2], &[1, -2]]),
            cnf(3, &[&[1, 2, 3], &[-1, -2], &[3], &[-3, 1]]),
            cnf(3, &[&[1], &[-1, 2], &[-2, 3], &[-3, -1]]),
            cnf(4, &[&[1, 2], &[-1, 3], &[-3, 4], &[-4, -2, 1], &[2, 3, 4]]),
        ];
        for f in cases {
            let sat = sat_brute_force(f.num_vars, &f.clauses).unwrap().is_some();
            let (g, map) = reduce_plain(&f, false).unwrap();
            let oracle = sigma_path_exists(&g, OracleBudget::default());
            assert_eq!(
                oracle,
                if sat { OracleDecision::Yes } else { OracleDecision::No },
                "plain reduction disagrees with SAT on {f:?}"
            );
            // Every sigma path decodes to a satisfying assignment.
            for p in enumerate_sigma_paths(&g, OracleBudget::default()).unwrap() {
                let assignment = map.decode_assignment(&g, &p).expect("consistent path");
                assert!(f.eval(&assignment), "decoded assignment fails {f:?}");
            }
        }
    }

    #[test]
    fn full_reduction_is_a_valid_2msp() {
        for f in [
            f2(),
            cnf(3, &[&[1, 2, 3], &[-1, -2, 3], &[2, -3, 1]]),
            cnf(2, &[&[1, 2], &[1, 2]]),
        ] {
            let (g, _) = reduce_full(&f, false).unwrap();
            let violations = g.validate_2msp();
            assert!(violations.is_empty(), "violations on {f:?}: {violations:?}");
            assert!(preprocess(&g).check_properties().is_empty());
        }
    }

    #[test]
    fn full_reduction_shape_and_sizes() {
        let f = cnf(3, &[&[1, 2, 3], &[-1, -2, 3], &[2, -3, 1]]);
        let (g, map) = reduce_full(&f, true).unwrap();
        let m = 3;
        assert_eq!(g.last_stage(), 2 * m + 1);
        assert_eq!(g.num_vertices(), 6 * m + 2);
        assert_eq!(g.num_edges(), 12 * m - 3);
        // Coupler pair naming in lexicographic order at each coupler
        // stage.
        let coupler_stage = 2;
        let pairs: Vec<(usize, usize)> = (0..3)
            .map(|p| match map.role(g.vertex_at(coupler_stage, p)) {
                VertexRole::Coupler { pair, .. } => pair,
                other => panic!("expected coupler, found {other:?}"),
            })
            .collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
        // Collector column is single-in, one per last-clause literal.
        for p in 0..3 {
            let v = g.vertex_at(2 * m, p);
            assert!(matches!(map.role(v), VertexRole::Collector { .. }));
            assert_eq!(g.in_degree(v), 1);
            assert_eq!(g.out_degree(v), 1);
        }
    }

    #[test]
    fn full_reduction_matches_brute_force_sat() {
        let cases = [
            f2(),
            cnf(2, &[&[1, 2], &[-1, 2], &[1, -2]]),
            cnf(3, &[&[1, 2, 3], &[-1, -2, -3], &[1, -2, 3], &[-1, 2, -3]]),
            cnf(3, &[&[1, 1, 1], &[-1, -1, -1], &[1, 2, 3]]),
            cnf(4, &[&[1, 2], &[-1, 3], &[-3, 4], &[-4, -2]]),
        ];
        for f in cases {
            let sat = sat_brute_force(f.num_vars, &f.clauses).unwrap().is_some();
            let (g, map) = reduce_full(&f, false).unwrap();
            let oracle = sigma_path_exists(&g, OracleBudget::default());
            assert_eq!(
                oracle,
                if sat { OracleDecision::Yes } else { OracleDecision::No },
                "full reduction disagrees with SAT on {f:?}"
            );
            for p in enumerate_sigma_paths(&g, OracleBudget::default()).unwrap() {
                let assignment = map.decode_assignment(&g, &p).expect("consistent path");
                assert!(f.eval(&assignment), "decoded assignment fails {f:?}");
            }
        }
    }

    #[test]
    fn full_reduction_agrees_with_the_solver() {
        let cases = [
            f2(),
            cnf(2, &[&[1, 2], &[-1, 2], &[1, -2]]),
            cnf(3, &[&[1, 2, 3], &[-1, -2, -3], &[1, -2, 3]]),
        ];
        for f in cases {
            let sat = sat_brute_force(f.num_vars, &f.clauses).unwrap().is_some();
            let (g, _) = reduce_full(&f, false).unwrap();
            let out = zh_solve(&g, ZhOptions::default()).unwrap();
            assert_eq!(
                out.decision,
                if sat { Decision::Yes } else { Decision::No },
                "solver disagrees with SAT on {f:?}"
            );
        }
    }

    #[test]
    fn decode_rejects_contradictory_paths() {
        let f = cnf(2, &[&[1, 2], &[-1, 2]]);
        let (g, map) = reduce_full(&f, false).unwrap();
        // A fabricated edge set touching both polarities of variable 1
        // cannot decode.
        let mut fake = g.empty_edge_set();
        let pos_v = g
            .vertices()
            .find(|&v| matches!(map.role(v), VertexRole::Literal { literal: 1, .. }))
            .unwrap();
        let neg_v = g
            .vertices()
            .find(|&v| matches!(map.role(v), VertexRole::Literal { literal: -1, .. }))
            .unwrap();
        fake.insert(g.in_edges(pos_v)[0]);
        fake.insert(g.in_edges(neg_v)[0]);
        assert!(map.decode_assignment(&g, &fake).is_none());
    }
}
