//! Labeled multi-stage graphs.
//!
//! A multi-stage graph arranges vertices in stages `0..=L` with a single
//! source `S` at stage 0 and a single sink `D` at stage `L`. Every edge
//! crosses exactly one stage boundary: an edge of stage `l` runs from a
//! vertex at stage `l-1` to a vertex at stage `l`. Every vertex except the
//! source carries a label: a set of edges. A path is a *sigma path* when it
//! runs from `S` to `D` and every prefix (including the edge arriving at
//! each vertex) is contained in that vertex's label; *omega paths* are the
//! same prefix-closure notion for path segments that do not span `S` to `D`.
//!
//! The module owns the dense edge-set representation, the structural
//! validator for the restricted "2-MSP" shape, label-hygiene checks, and the
//! path-restriction operator `restrict` that the decision kernel is built
//! from. Edge identities are dense indices in `(stage, tail position, head
//! position)` lexicographic order; every iteration in this crate walks edges
//! in that order so runs are deterministic.

use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

/// Reusable per-thread buffers for the reachability searches. Visit marks
/// are epoch-stamped so a search starts without clearing the arrays.
#[derive(Default)]
struct SearchScratch {
    epoch: u32,
    fwd: Vec<u32>,
    back: Vec<u32>,
    queue: Vec<VertexId>,
}

impl SearchScratch {
    /// Sizes the buffers for `n` vertices and opens a fresh epoch.
    fn begin(&mut self, n: usize) -> u32 {
        if self.fwd.len() < n {
            self.fwd.resize(n, 0);
            self.back.resize(n, 0);
        }
        if self.epoch == u32::MAX {
            self.fwd.fill(0);
            self.back.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.queue.clear();
        self.epoch
    }
}

thread_local! {
    static SCRATCH: RefCell<SearchScratch> = RefCell::new(SearchScratch::default());
}

/// Dense vertex index. Vertices are numbered stage-major: the source is 0,
/// stage 1 follows, and the sink is the last index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

/// Dense edge index in `(stage, tail position, head position)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

/// A directed edge from a stage `stage - 1` vertex to a stage `stage` vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: VertexId,
    pub head: VertexId,
    pub stage: usize,
}

/// A set of edges over a fixed edge universe, stored as a bitset.
///
/// All binary operations require both operands to share the same universe
/// size and panic otherwise; mixing universes is a programming error, not a
/// recoverable condition.
#[derive(Clone, PartialEq, Eq)]
pub struct EdgeSet {
    universe: usize,
    words: Vec<u64>,
}

impl EdgeSet {
    pub fn empty(universe: usize) -> Self {
        EdgeSet {
            universe,
            words: vec![0; universe.div_ceil(64)],
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = EdgeSet {
            universe,
            words: vec![!0u64; universe.div_ceil(64)],
        };
        s.clear_tail();
        s
    }

    fn clear_tail(&mut self) {
        let extra = self.words.len() * 64 - self.universe;
        if extra > 0 {
            let last = self.words.len() - 1;
            self.words[last] &= !0u64 >> extra;
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, e: EdgeId) -> bool {
        debug_assert!(e.0 < self.universe);
        self.words[e.0 / 64] >> (e.0 % 64) & 1 == 1
    }

    pub fn insert(&mut self, e: EdgeId) {
        assert!(e.0 < self.universe, "edge id out of universe");
        self.words[e.0 / 64] |= 1u64 << (e.0 % 64);
    }

    pub fn remove(&mut self, e: EdgeId) {
        debug_assert!(e.0 < self.universe);
        self.words[e.0 / 64] &= !(1u64 << (e.0 % 64));
    }

    fn check(&self, other: &EdgeSet) {
        assert_eq!(
            self.universe, other.universe,
            "edge sets over different universes"
        );
    }

    pub fn union_with(&mut self, other: &EdgeSet) {
        self.check(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &EdgeSet) {
        self.check(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract_with(&mut self, other: &EdgeSet) {
        self.check(other);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        let mut s = self.clone();
        s.subtract_with(other);
        s
    }

    pub fn is_subset_of(&self, other: &EdgeSet) -> bool {
        self.check(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint_from(&self, other: &EdgeSet) -> bool {
        self.check(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// Keep only ids in `lo..hi`.
    pub(crate) fn retain_id_range(&mut self, lo: usize, hi: usize) {
        let hi = hi.min(self.universe);
        if lo >= hi {
            for w in &mut self.words {
                *w = 0;
            }
            return;
        }
        for (i, w) in self.words.iter_mut().enumerate() {
            let base = i * 64;
            if base + 64 <= lo || base >= hi {
                *w = 0;
                continue;
            }
            if base < lo {
                *w &= !0u64 << (lo - base);
            }
            if base + 64 > hi {
                *w &= !0u64 >> (base + 64 - hi);
            }
        }
    }

    /// Ascending iterator over member edge ids.
    pub fn iter(&self) -> EdgeSetIter<'_> {
        EdgeSetIter {
            set: self,
            word_ix: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }

    pub fn to_vec(&self) -> Vec<EdgeId> {
        self.iter().collect()
    }
}

pub struct EdgeSetIter<'a> {
    set: &'a EdgeSet,
    word_ix: usize,
    current: u64,
}

impl Iterator for EdgeSetIter<'_> {
    type Item = EdgeId;

    fn next(&mut self) -> Option<EdgeId> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(EdgeId(self.word_ix * 64 + bit));
            }
            self.word_ix += 1;
            if self.word_ix >= self.set.words.len() {
                return None;
            }
            self.current = self.set.words[self.word_ix];
        }
    }
}

impl fmt::Debug for EdgeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|e| e.0)).finish()
    }
}

/// Construction errors. Structural problems that make the input meaningless
/// as a multi-stage graph are rejected here; shape constraints beyond that
/// (the 2-MSP items) are reported by [`MultiStageGraph::validate_2msp`]
/// instead of blocking construction.
#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("malformed stage layout: {0}")]
    MalformedStage(String),
    #[error("dangling edge: {0}")]
    DanglingEdge(String),
    #[error("bad label: {0}")]
    BadLabel(String),
}

/// Plain-data description of a graph, as found in instance files.
///
/// `edges` entries are `(tail position in stage l-1, head position in stage
/// l, stage l)`. Label values are edge ids in the canonical `(stage, tail,
/// head)` order, independent of the order edges appear in `edges`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphSpec {
    pub stage_sizes: Vec<usize>,
    pub edges: Vec<(usize, usize, usize)>,
    pub labels: BTreeMap<(usize, usize), Vec<usize>>,
}

/// The six structural items of the restricted shape plus the three label
/// hygiene properties. Violations are data; callers decide whether any of
/// them is fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Item 1: a non-sink vertex with no way forward, or a non-source
    /// vertex with no way back.
    DeadEnd,
    /// Item 2: in-degree above 2, or a stage `L-1` vertex whose in-degree
    /// is not exactly 1.
    InDegreeCap,
    /// Item 3: a single-in-degree vertex that can reach a multi-in-degree
    /// vertex other than the sink.
    SingleInCorridor,
    /// Item 4: more than two multi-in-degree vertices in one stage of width
    /// greater than 3.
    MultiInQuota,
    /// Item 5: out-degree exceeding in-degree at an interior stage.
    OutDegreeExceedsIn,
    /// Item 6: the sink label is not the full edge set, or a stage-1 vertex
    /// label is missing its own incoming edge.
    LabelAnchor,
    /// A label contains an edge that lies on no source-to-vertex path.
    LabelReach,
    /// A label contains a stage-2 edge without the matching stage-1 edge.
    LabelPrefixPair,
    /// A label's below-stage part is not covered by its predecessors'
    /// labels.
    LabelPredecessorCover,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending vertex or edge, rendered as `stage:pos` or
    /// `stage:pos->stage:pos@stage`.
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.subject, self.detail)
    }
}

/// A labeled multi-stage graph. Immutable after construction; the
/// preprocessing pass in the kernel module produces a relabeled clone.
#[derive(Clone)]
pub struct MultiStageGraph {
    stage_counts: Vec<usize>,
    stage_vertex_start: Vec<usize>,
    vertex_stage: Vec<usize>,
    vertex_pos: Vec<usize>,
    edges: Vec<Edge>,
    stage_edge_start: Vec<usize>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
    labels: Vec<EdgeSet>,
}

/// Builds a graph from its plain-data description.
///
/// Enforces: at least 6 stage entries (so `L >= 5`), singleton source and
/// sink stages, no empty stage, edges that respect the stage layout, no
/// duplicate edge, and a label entry for every vertex except the source.
pub fn build_graph(spec: &GraphSpec) -> Result<MultiStageGraph, GraphError> {
    build_graph_with_min_stages(spec, 5)
}

/// Same as [`build_graph`] but with a caller-chosen floor on `L`. The
/// reduction pipeline uses this for intermediate artifacts with fewer than
/// four clause stages; everything user-facing goes through [`build_graph`].
pub(crate) fn build_graph_with_min_stages(
    spec: &GraphSpec,
    min_l: usize,
) -> Result<MultiStageGraph, GraphError> {
    let n_stages = spec.stage_sizes.len();
    if n_stages < min_l + 1 {
        return Err(GraphError::MalformedStage(format!(
            "need at least {} stages (L >= {}), got {}",
            min_l + 1,
            min_l,
            n_stages
        )));
    }
    let l = n_stages - 1;
    if spec.stage_sizes[0] != 1 || spec.stage_sizes[l] != 1 {
        return Err(GraphError::MalformedStage(format!(
            "source and sink stages must hold exactly one vertex, got {} and {}",
            spec.stage_sizes[0], spec.stage_sizes[l]
        )));
    }
    if let Some(s) = spec.stage_sizes.iter().position(|&c| c == 0) {
        return Err(GraphError::MalformedStage(format!("stage {s} is empty")));
    }

    let mut stage_vertex_start = Vec::with_capacity(n_stages + 1);
    let mut acc = 0usize;
    for &c in &spec.stage_sizes {
        stage_vertex_start.push(acc);
        acc += c;
    }
    stage_vertex_start.push(acc);
    let n_vertices = acc;

    let mut vertex_stage = Vec::with_capacity(n_vertices);
    let mut vertex_pos = Vec::with_capacity(n_vertices);
    for (s, &c) in spec.stage_sizes.iter().enumerate() {
        for p in 0..c {
            vertex_stage.push(s);
            vertex_pos.push(p);
        }
    }

    let mut triples: Vec<(usize, usize, usize)> = Vec::with_capacity(spec.edges.len());
    for &(tail_pos, head_pos, stage) in &spec.edges {
        if stage == 0 || stage > l {
            return Err(GraphError::DanglingEdge(format!(
                "edge ({tail_pos},{head_pos},{stage}) has stage outside 1..={l}"
            )));
        }
        if tail_pos >= spec.stage_sizes[stage - 1] || head_pos >= spec.stage_sizes[stage] {
            return Err(GraphError::DanglingEdge(format!(
                "edge ({tail_pos},{head_pos},{stage}) points outside stages {} and {}",
                stage - 1,
                stage
            )));
        }
        triples.push((stage, tail_pos, head_pos));
    }
    triples.sort_unstable();
    if let Some(w) = triples.windows(2).find(|w| w[0] == w[1]) {
        return Err(GraphError::DanglingEdge(format!(
            "duplicate edge ({},{},{})",
            w[0].1, w[0].2, w[0].0
        )));
    }

    let n_edges = triples.len();
    let mut edges = Vec::with_capacity(n_edges);
    let mut stage_edge_start = vec![0usize; l + 2];
    let mut out_edges = vec![Vec::new(); n_vertices];
    let mut in_edges = vec![Vec::new(); n_vertices];
    for (i, &(stage, tail_pos, head_pos)) in triples.iter().enumerate() {
        let tail = VertexId(stage_vertex_start[stage - 1] + tail_pos);
        let head = VertexId(stage_vertex_start[stage] + head_pos);
        edges.push(Edge { tail, head, stage });
        out_edges[tail.0].push(EdgeId(i));
        in_edges[head.0].push(EdgeId(i));
        stage_edge_start[stage + 1] = i + 1;
    }
    // Stages without edges inherit the running offset.
    for s in 1..stage_edge_start.len() {
        if stage_edge_start[s] < stage_edge_start[s - 1] {
            stage_edge_start[s] = stage_edge_start[s - 1];
        }
    }

    let mut labels = vec![EdgeSet::empty(n_edges); n_vertices];
    let mut seen = vec![false; n_vertices];
    seen[0] = true; // the source never carries a label
    for (&(stage, pos), ids) in &spec.labels {
        if stage >= n_stages || pos >= spec.stage_sizes[stage] {
            return Err(GraphError::BadLabel(format!(
                "label keyed by nonexistent vertex {stage}:{pos}"
            )));
        }
        let v = stage_vertex_start[stage] + pos;
        if v == 0 {
            return Err(GraphError::BadLabel(
                "the source vertex cannot carry a label".into(),
            ));
        }
        seen[v] = true;
        for &id in ids {
            if id >= n_edges {
                return Err(GraphError::BadLabel(format!(
                    "label of {stage}:{pos} references edge id {id}, universe has {n_edges}"
                )));
            }
            labels[v].insert(EdgeId(id));
        }
    }
    if let Some(v) = seen.iter().position(|&s| !s) {
        return Err(GraphError::BadLabel(format!(
            "missing label for vertex {}:{}",
            vertex_stage[v], vertex_pos[v]
        )));
    }

    Ok(MultiStageGraph {
        stage_counts: spec.stage_sizes.clone(),
        stage_vertex_start,
        vertex_stage,
        vertex_pos,
        edges,
        stage_edge_start,
        out_edges,
        in_edges,
        labels,
    })
}

impl MultiStageGraph {
    /// The sink stage index `L`.
    pub fn last_stage(&self) -> usize {
        self.stage_counts.len() - 1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_stage.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> VertexId {
        VertexId(0)
    }

    pub fn sink(&self) -> VertexId {
        VertexId(self.num_vertices() - 1)
    }

    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_counts
    }

    pub fn stage_of(&self, v: VertexId) -> usize {
        self.vertex_stage[v.0]
    }

    pub fn pos_of(&self, v: VertexId) -> usize {
        self.vertex_pos[v.0]
    }

    pub fn vertex_at(&self, stage: usize, pos: usize) -> VertexId {
        debug_assert!(pos < self.stage_counts[stage]);
        VertexId(self.stage_vertex_start[stage] + pos)
    }

    pub fn stage_vertices(&self, stage: usize) -> impl Iterator<Item = VertexId> {
        (self.stage_vertex_start[stage]..self.stage_vertex_start[stage + 1]).map(VertexId)
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.num_vertices()).map(VertexId)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.num_edges()).map(EdgeId)
    }

    /// Edge ids of a single stage, a contiguous id range by construction.
    pub fn stage_edges(&self, stage: usize) -> std::ops::Range<usize> {
        self.stage_edge_start[stage]..self.stage_edge_start[stage + 1]
    }

    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v.0]
    }

    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.in_edges[v.0]
    }

    pub fn in_degree(&self, v: VertexId) -> usize {
        self.in_edges[v.0].len()
    }

    pub fn out_degree(&self, v: VertexId) -> usize {
        self.out_edges[v.0].len()
    }

    /// The label of `v`. The source carries no label; asking for it is a
    /// programming error.
    pub fn label(&self, v: VertexId) -> &EdgeSet {
        assert!(v.0 != 0, "the source vertex has no label");
        &self.labels[v.0]
    }

    pub(crate) fn set_label(&mut self, v: VertexId, set: EdgeSet) {
        debug_assert!(v.0 != 0);
        debug_assert_eq!(set.universe(), self.num_edges());
        self.labels[v.0] = set;
    }

    pub fn empty_edge_set(&self) -> EdgeSet {
        EdgeSet::empty(self.num_edges())
    }

    pub fn full_edge_set(&self) -> EdgeSet {
        EdgeSet::full(self.num_edges())
    }

    pub fn vertex_name(&self, v: VertexId) -> String {
        format!("{}:{}", self.vertex_stage[v.0], self.vertex_pos[v.0])
    }

    pub fn edge_name(&self, e: EdgeId) -> String {
        let edge = &self.edges[e.0];
        format!(
            "{}->{}@{}",
            self.vertex_name(edge.tail),
            self.vertex_name(edge.head),
            edge.stage
        )
    }

    /// Looks up the id of the edge `tail -> head`, if present.
    pub fn edge_id_between(&self, tail: VertexId, head: VertexId) -> Option<EdgeId> {
        let stage = self.vertex_stage[head.0];
        let range = self.stage_edges(stage);
        let key = (stage, self.vertex_pos[tail.0], self.vertex_pos[head.0]);
        let ids = &self.edges[range.clone()];
        ids.binary_search_by_key(&key, |edge| {
            (
                edge.stage,
                self.vertex_pos[edge.tail.0],
                self.vertex_pos[edge.head.0],
            )
        })
        .ok()
        .map(|off| EdgeId(range.start + off))
    }

    /// Emptiness probe for [`MultiStageGraph::restrict`]: true exactly
    /// when `restrict(es, u, v)` would be nonempty, without building the
    /// set. A single forward search suffices because any reached vertex
    /// is reached along a full path from `u`.
    pub fn reaches(&self, es: &EdgeSet, u: VertexId, v: VertexId) -> bool {
        debug_assert_eq!(es.universe(), self.num_edges());
        self.reaches_by(|e| es.contains(e), u, v)
    }

    /// [`MultiStageGraph::reaches`] within the intersection of two sets,
    /// without materializing it.
    pub fn reaches2(&self, a: &EdgeSet, b: &EdgeSet, u: VertexId, v: VertexId) -> bool {
        debug_assert_eq!(a.universe(), self.num_edges());
        debug_assert_eq!(b.universe(), self.num_edges());
        self.reaches_by(|e| a.contains(e) && b.contains(e), u, v)
    }

    fn reaches_by(&self, live: impl Fn(EdgeId) -> bool, u: VertexId, v: VertexId) -> bool {
        if u == v || self.vertex_stage[u.0] >= self.vertex_stage[v.0] {
            return false;
        }
        SCRATCH.with(|cell| {
            let s = &mut *cell.borrow_mut();
            let epoch = s.begin(self.num_vertices());
            s.fwd[u.0] = epoch;
            s.queue.push(u);
            while let Some(x) = s.queue.pop() {
                for &e in &self.out_edges[x.0] {
                    if !live(e) {
                        continue;
                    }
                    let head = self.edges[e.0].head;
                    if head == v {
                        return true;
                    }
                    if s.fwd[head.0] != epoch {
                        s.fwd[head.0] = epoch;
                        s.queue.push(head);
                    }
                }
            }
            false
        })
    }

    /// Edges of `es` that lie on at least one `u -> v` path using only
    /// edges of `es`. Empty when `u == v`: a single vertex spans no edges.
    ///
    /// Computed as the intersection of forward reachability from `u` and
    /// backward reachability from `v`, both within `es`; on a staged DAG
    /// that intersection is exactly the path-union.
    pub fn restrict(&self, es: &EdgeSet, u: VertexId, v: VertexId) -> EdgeSet {
        debug_assert_eq!(es.universe(), self.num_edges());
        let mut result = self.empty_edge_set();
        if u == v || self.vertex_stage[u.0] >= self.vertex_stage[v.0] {
            return result;
        }
        SCRATCH.with(|cell| {
            let s = &mut *cell.borrow_mut();
            let epoch = s.begin(self.num_vertices());
            s.fwd[u.0] = epoch;
            s.queue.push(u);
            while let Some(x) = s.queue.pop() {
                for &e in &self.out_edges[x.0] {
                    if !es.contains(e) {
                        continue;
                    }
                    let head = self.edges[e.0].head;
                    if s.fwd[head.0] != epoch {
                        s.fwd[head.0] = epoch;
                        s.queue.push(head);
                    }
                }
            }
            s.back[v.0] = epoch;
            s.queue.push(v);
            while let Some(x) = s.queue.pop() {
                for &e in &self.in_edges[x.0] {
                    if !es.contains(e) {
                        continue;
                    }
                    let tail = self.edges[e.0].tail;
                    if s.back[tail.0] != epoch {
                        s.back[tail.0] = epoch;
                        s.queue.push(tail);
                    }
                }
            }
            for e in es.iter() {
                let edge = &self.edges[e.0];
                if s.fwd[edge.tail.0] == epoch && s.back[edge.head.0] == epoch {
                    result.insert(e);
                }
            }
        });
        result
    }

    /// Edges of `es` whose stage lies in `i..=j`. Empty when `i > j`.
    pub fn slice(&self, es: &EdgeSet, i: usize, j: usize) -> EdgeSet {
        debug_assert_eq!(es.universe(), self.num_edges());
        let mut out = es.clone();
        if i > j || i > self.last_stage() {
            return self.empty_edge_set();
        }
        let j = j.min(self.last_stage());
        out.retain_id_range(self.stage_edge_start[i], self.stage_edge_start[j + 1]);
        out
    }

    /// Checks that `p` forms one contiguous path and returns its edge ids
    /// in path order, or `None`.
    fn path_edges(&self, p: &EdgeSet) -> Option<Vec<EdgeId>> {
        let ids = p.to_vec();
        if ids.is_empty() {
            return None;
        }
        for w in ids.windows(2) {
            let a = &self.edges[w[0].0];
            let b = &self.edges[w[1].0];
            if b.stage != a.stage + 1 || b.tail != a.head {
                return None;
            }
        }
        Some(ids)
    }

    /// True when `p` is one contiguous path segment whose every prefix,
    /// read from the segment's first vertex, is contained in the label of
    /// the vertex the prefix arrives at.
    pub fn is_omega_path(&self, p: &EdgeSet) -> bool {
        let Some(ids) = self.path_edges(p) else {
            return false;
        };
        self.prefixes_ok(&ids)
    }

    /// True when `p` is a full source-to-sink path and every prefix is
    /// contained in the label of the vertex it arrives at.
    pub fn is_sigma_path(&self, p: &EdgeSet) -> bool {
        let Some(ids) = self.path_edges(p) else {
            return false;
        };
        let first = &self.edges[ids[0].0];
        let last = &self.edges[ids[ids.len() - 1].0];
        if first.tail != self.source() || last.head != self.sink() {
            return false;
        }
        self.prefixes_ok(&ids)
    }

    fn prefixes_ok(&self, ids: &[EdgeId]) -> bool {
        let mut prefix = self.empty_edge_set();
        for &e in ids {
            prefix.insert(e);
            let head = self.edges[e.0].head;
            if !prefix.is_subset_of(&self.labels[head.0]) {
                return false;
            }
        }
        true
    }

    /// Sum of `in_degree - 1` over all vertices except source and sink.
    /// Meaningful on graphs where every such vertex has an incoming edge.
    pub fn f_metric(&self) -> u64 {
        self.vertices()
            .filter(|&v| v != self.source() && v != self.sink())
            .map(|v| (self.in_degree(v) as u64).saturating_sub(1))
            .sum()
    }

    /// Checks the six structural items of the restricted shape and returns
    /// every violation found. An empty result means the graph is a 2-MSP.
    pub fn validate_2msp(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let l = self.last_stage();
        let source = self.source();
        let sink = self.sink();

        // Item 1: no dead ends in either direction.
        for v in self.vertices() {
            if v != sink && self.out_degree(v) == 0 {
                out.push(Violation {
                    kind: ViolationKind::DeadEnd,
                    subject: self.vertex_name(v),
                    detail: "no outgoing edge".into(),
                });
            }
            if v != source && self.in_degree(v) == 0 {
                out.push(Violation {
                    kind: ViolationKind::DeadEnd,
                    subject: self.vertex_name(v),
                    detail: "no incoming edge".into(),
                });
            }
        }

        // Item 2: in-degree caps.
        for v in self.vertices() {
            if v == source || v == sink {
                continue;
            }
            let d = self.in_degree(v);
            if self.stage_of(v) == l - 1 {
                if d != 1 {
                    out.push(Violation {
                        kind: ViolationKind::InDegreeCap,
                        subject: self.vertex_name(v),
                        detail: format!("stage {} requires in-degree 1, found {d}", l - 1),
                    });
                }
            } else if d > 2 {
                out.push(Violation {
                    kind: ViolationKind::InDegreeCap,
                    subject: self.vertex_name(v),
                    detail: format!("in-degree {d} exceeds 2"),
                });
            }
        }

        // Item 3: past a single-in-degree vertex, every reachable vertex
        // except the sink must also have in-degree at most 1.
        for v in self.vertices() {
            let s = self.stage_of(v);
            if s <= 1 || s >= l || self.in_degree(v) > 1 {
                continue;
            }
            let mut seen = vec![false; self.num_vertices()];
            seen[v.0] = true;
            let mut queue = vec![v];
            while let Some(x) = queue.pop() {
                for &e in &self.out_edges[x.0] {
                    let head = self.edges[e.0].head;
                    if seen[head.0] {
                        continue;
                    }
                    seen[head.0] = true;
                    if head != sink && self.in_degree(head) > 1 {
                        out.push(Violation {
                            kind: ViolationKind::SingleInCorridor,
                            subject: self.vertex_name(v),
                            detail: format!(
                                "reaches {} with in-degree {}",
                                self.vertex_name(head),
                                self.in_degree(head)
                            ),
                        });
                    }
                    queue.push(head);
                }
            }
        }

        // Item 4: at most two multi-in vertices per wide interior stage.
        for stage in 2..l {
            if self.stage_counts[stage] <= 3 {
                continue;
            }
            let multi = self
                .stage_vertices(stage)
                .filter(|&v| self.in_degree(v) >= 2)
                .count();
            if multi > 2 {
                out.push(Violation {
                    kind: ViolationKind::MultiInQuota,
                    subject: format!("stage {stage}"),
                    detail: format!(
                        "{multi} vertices with in-degree 2 in a stage of width {}",
                        self.stage_counts[stage]
                    ),
                });
            }
        }

        // Item 5: out-degree bounded by in-degree on interior stages.
        for v in self.vertices() {
            let s = self.stage_of(v);
            if s <= 1 || s + 2 >= l {
                continue;
            }
            if self.out_degree(v) > self.in_degree(v) {
                out.push(Violation {
                    kind: ViolationKind::OutDegreeExceedsIn,
                    subject: self.vertex_name(v),
                    detail: format!(
                        "out-degree {} exceeds in-degree {}",
                        self.out_degree(v),
                        self.in_degree(v)
                    ),
                });
            }
        }

        // Item 6: sink label is everything; stage-1 labels anchor their own
        // incoming edge.
        if self.labels[sink.0] != self.full_edge_set() {
            out.push(Violation {
                kind: ViolationKind::LabelAnchor,
                subject: self.vertex_name(sink),
                detail: format!(
                    "sink label holds {} of {} edges",
                    self.labels[sink.0].len(),
                    self.num_edges()
                ),
            });
        }
        for a in self.stage_vertices(1) {
            match self.edge_id_between(source, a) {
                Some(e) if self.labels[a.0].contains(e) => {}
                Some(e) => out.push(Violation {
                    kind: ViolationKind::LabelAnchor,
                    subject: self.vertex_name(a),
                    detail: format!("label is missing its incoming edge {}", self.edge_name(e)),
                }),
                None => out.push(Violation {
                    kind: ViolationKind::LabelAnchor,
                    subject: self.vertex_name(a),
                    detail: "no edge from the source".into(),
                }),
            }
        }

        out
    }

    /// Checks the three label hygiene properties that preprocessing
    /// establishes: labels stay within source-reachability, stage-2 label
    /// edges are paired with their stage-1 prefix edge, and the below-stage
    /// part of each label is covered by predecessor labels.
    pub fn check_properties(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let full = self.full_edge_set();
        for v in self.vertices().skip(1) {
            let reach = self.restrict(&full, self.source(), v);
            if !self.labels[v.0].is_subset_of(&reach) {
                let bad = self.labels[v.0].difference(&reach);
                out.push(Violation {
                    kind: ViolationKind::LabelReach,
                    subject: self.vertex_name(v),
                    detail: format!(
                        "{} label edges lie on no source path, first {}",
                        bad.len(),
                        self.edge_name(bad.iter().next().unwrap())
                    ),
                });
            }
        }
        for v in self.vertices().skip(1) {
            for e in self.slice(&self.labels[v.0], 2, 2).iter() {
                let a = self.edges[e.0].tail;
                let ok = self
                    .edge_id_between(self.source(), a)
                    .is_some_and(|first| self.labels[v.0].contains(first));
                if !ok {
                    out.push(Violation {
                        kind: ViolationKind::LabelPrefixPair,
                        subject: self.vertex_name(v),
                        detail: format!(
                            "label holds {} without the stage-1 edge into {}",
                            self.edge_name(e),
                            self.vertex_name(a)
                        ),
                    });
                }
            }
        }
        for v in self.vertices().skip(1) {
            let stage = self.stage_of(v);
            if stage < 2 {
                continue;
            }
            let mut pred_union = self.empty_edge_set();
            for &e in &self.in_edges[v.0] {
                let tail = self.edges[e.0].tail;
                if tail != self.source() {
                    pred_union.union_with(&self.labels[tail.0]);
                }
            }
            let below = self.slice(&self.labels[v.0], 1, stage - 1);
            if !below.is_subset_of(&pred_union) {
                let bad = below.difference(&pred_union);
                out.push(Violation {
                    kind: ViolationKind::LabelPredecessorCover,
                    subject: self.vertex_name(v),
                    detail: format!(
                        "{} below-stage label edges missing from predecessor labels, first {}",
                        bad.len(),
                        self.edge_name(bad.iter().next().unwrap())
                    ),
                });
            }
        }
        out
    }

    /// Rebuilds the plain-data description, labels rendered against the
    /// canonical edge order.
    pub fn to_spec(&self) -> GraphSpec {
        let mut spec = GraphSpec {
            stage_sizes: self.stage_counts.clone(),
            ..Default::default()
        };
        for e in &self.edges {
            spec.edges
                .push((self.vertex_pos[e.tail.0], self.vertex_pos[e.head.0], e.stage));
        }
        for v in self.vertices().skip(1) {
            spec.labels.insert(
                (self.vertex_stage[v.0], self.vertex_pos[v.0]),
                self.labels[v.0].iter().map(|e| e.0).collect(),
            );
        }
        spec
    }
}

impl fmt::Debug for MultiStageGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MultiStageGraph(L={}, |V|={}, |E|={})",
            self.last_stage(),
            self.num_vertices(),
            self.num_edges()
        )
    }
}
