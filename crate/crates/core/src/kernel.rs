//! The polynomial sigma-path decision kernel.
//!
//! The kernel decides "does a sigma path exist" without enumerating paths.
//! It maintains, for every edge `e`, a shrinking set `R(e)` of edges that
//! could still follow `e` on an admissible route, then repeatedly couples
//! those sets against each other until nothing changes. The pieces:
//!
//! * [`preprocess`]: label hygiene. Trims every label to edges that lie on
//!   some source path, drops stage-2 label edges whose stage-1 prefix edge
//!   is absent, and caps each label's below-stage part by the union of its
//!   predecessors' labels, to a fixpoint. All three moves only remove label
//!   edges that no sigma path can use, so sigma-path existence is
//!   preserved exactly.
//! * [`rho`]: the initial `R(e)`, edges jointly endorsed by the labels of
//!   both endpoints, restricted to routes from `e`'s head to the sink.
//! * [`chi`]: prunes a working set against `R` until it stabilizes; the
//!   survivors of `chi(v, es)` are edges that still sit on live routes
//!   from the source to `v` inside `es`.
//! * [`psi`]: the coupling step. For each candidate successor `e2` of `e`
//!   it rebuilds the set of edges that can precede `e2` (`A`), narrows it
//!   to edges that jointly support both `e` and `e2` (`B`), and drops `e2`
//!   when that support is empty.
//! * [`zh_solve`]: sweeps `psi` over stages `3..=L-1` in edge-id order to
//!   a global fixpoint, then answers yes exactly when
//!   `chi(sink, label(sink))` is nonempty. That final set is the compact
//!   kernel: it contains every sigma path of the instance, so "kernel
//!   empty" is a sound "no" and the oracle can never contradict it on a
//!   yes-instance.
//!
//! Every loop walks edges in ascending id order and every run is
//! deterministic; the sweep order is stamped into the run statistics.

use crate::graph::{EdgeId, EdgeSet, MultiStageGraph, VertexId, Violation};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// How to treat inputs that fail 2-MSP validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Reject invalid instances.
    Strict,
    /// Run anyway and report the violations alongside the result. The
    /// decision is only covered by the soundness argument for valid
    /// instances.
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Yes,
    No,
}

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("instance failed 2-MSP validation with {} violations, first: {}",
            .violations.len(), .violations.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidInstance { violations: Vec<Violation> },
}

/// Per-edge successor sets, indexed by edge id.
#[derive(Clone, PartialEq, Eq)]
pub struct RMap {
    sets: Vec<EdgeSet>,
}

impl RMap {
    pub fn of(&self, e: EdgeId) -> &EdgeSet {
        &self.sets[e.0]
    }

    fn of_mut(&mut self, e: EdgeId) -> &mut EdgeSet {
        &mut self.sets[e.0]
    }

    /// Total membership count over all sets.
    pub fn support(&self) -> u64 {
        self.sets.iter().map(|s| s.len() as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    RhoInit,
    ChiPrune,
    PsiPrune,
    FixpointPass,
}

/// One prune or pass event. With tracing enabled the log is complete:
/// every removal from a persistent `R(e)` set and every removal during the
/// final kernel computation is recorded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TraceEvent {
    pub pass: u32,
    pub kind: TraceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_prime: Option<String>,
    pub reason: String,
}

/// Deterministic run counters. Wall-clock time is reported separately in
/// the harness so these stay byte-for-byte reproducible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ZhStats {
    /// Outer sweeps over stages `3..=L-1`, including the final sweep that
    /// observed stability.
    pub passes: u32,
    /// Total removals from `R` sets, both coupling prunes and
    /// off-sink-route trims.
    pub prune_events: u64,
    /// Total membership of the initial `R` sets; prune_events can never
    /// exceed this.
    pub initial_support: u64,
    pub kernel_size: usize,
    /// The fixed iteration order, stamped for reproducibility audits.
    pub sweep_order: &'static str,
}

pub const SWEEP_ORDER: &str = "stage-ascending,edge-id-ascending";

pub struct ZhOutcome {
    pub decision: Decision,
    /// `chi(sink, label(sink))` at the fixpoint; contains every sigma path.
    pub kernel: EdgeSet,
    /// The preprocessed instance the run was computed on.
    pub graph: MultiStageGraph,
    /// Final successor sets.
    pub rmap: RMap,
    /// Successor sets as initialized by `rho`, before any coupling.
    pub r0: RMap,
    pub stats: ZhStats,
    pub trace: Option<Vec<TraceEvent>>,
    /// Validation findings on the input (empty in strict mode, which
    /// rejects instead).
    pub violations: Vec<Violation>,
    pub wall_millis: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ZhOptions {
    pub mode: Mode,
    pub trace: bool,
}

impl Default for ZhOptions {
    fn default() -> Self {
        ZhOptions {
            mode: Mode::Permissive,
            trace: false,
        }
    }
}

struct Tracer {
    pass: u32,
    prunes: u64,
    events: Option<Vec<TraceEvent>>,
}

impl Tracer {
    fn new(trace: bool) -> Self {
        Tracer {
            pass: 0,
            prunes: 0,
            events: trace.then(Vec::new),
        }
    }

    fn record(&mut self, kind: TraceKind, e: Option<String>, e_prime: Option<String>, reason: &str) {
        if let Some(events) = &mut self.events {
            events.push(TraceEvent {
                pass: self.pass,
                kind,
                e,
                e_prime,
                reason: reason.to_string(),
            });
        }
    }
}

/// Label hygiene to a fixpoint. Returns a relabeled clone; the structure
/// (vertices, edges) is never touched. Idempotent, and a no-op on graphs
/// whose labels already satisfy all three properties checked by
/// [`MultiStageGraph::check_properties`].
pub fn preprocess(g: &MultiStageGraph) -> MultiStageGraph {
    let mut out = g.clone();
    let full = g.full_edge_set();
    let source = g.source();
    let last = g.last_stage();

    // Structure is fixed, so source-reachability per vertex is too.
    let reach: Vec<EdgeSet> = g
        .vertices()
        .map(|v| {
            if v == source {
                g.empty_edge_set()
            } else {
                g.restrict(&full, source, v)
            }
        })
        .collect();

    // Stage-2 out-edges per stage-1 vertex, for the prefix-pair rule.
    let stage1: Vec<(VertexId, Option<EdgeId>, EdgeSet)> = g
        .stage_vertices(1)
        .map(|a| {
            let first = g.edge_id_between(source, a);
            let mut outs = g.empty_edge_set();
            for &e in g.out_edges(a) {
                outs.insert(e);
            }
            (a, first, outs)
        })
        .collect();

    loop {
        let mut changed = false;

        // Trim every label to edges on some source route.
        for v in g.vertices().skip(1) {
            let narrowed = out.label(v).intersection(&reach[v.0]);
            if &narrowed != out.label(v) {
                out.set_label(v, narrowed);
                changed = true;
            }
        }

        // A label that lacks a stage-1 edge cannot keep that edge's
        // stage-2 continuations: any path using them carries the missing
        // edge in its prefix, so those label entries are dead weight.
        for v in g.vertices().skip(1) {
            if g.stage_of(v) < 2 {
                continue;
            }
            for (_, first, outs) in &stage1 {
                let Some(first) = *first else { continue };
                if out.label(v).contains(first) {
                    continue;
                }
                if !out.label(v).is_disjoint_from(outs) {
                    let narrowed = out.label(v).difference(outs);
                    out.set_label(v, narrowed);
                    changed = true;
                }
            }
        }

        // Below-stage label content must be covered by predecessor labels:
        // a prefix reaching v passed through some predecessor, whose label
        // already had to contain it.
        for v in g.vertices().skip(1) {
            let l = g.stage_of(v);
            if l < 2 {
                continue;
            }
            let mut pred_union = g.empty_edge_set();
            for &e in g.in_edges(v) {
                pred_union.union_with(out.label(g.edge(e).tail));
            }
            let mut narrowed = g.slice(out.label(v), 1, l - 1);
            narrowed.intersect_with(&pred_union);
            narrowed.union_with(&g.slice(out.label(v), l, l));
            if &narrowed != out.label(v) {
                out.set_label(v, narrowed);
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }
    debug_assert!(out.last_stage() == last);
    out
}

/// [`preprocess`], then restore the sink label when the input carried the
/// full one. Preprocessing can trim the sink label, but the structural
/// rules require emitted instances to carry the full set; with a full sink
/// label the prefix condition at the sink is vacuous, so the restore never
/// changes the sigma-path set. A partial input sink label does constrain
/// paths and is left as preprocessing trimmed it.
pub fn preprocess_for_emission(g: &MultiStageGraph) -> MultiStageGraph {
    let full = g.full_edge_set();
    let sink_was_full = g.label(g.sink()) == &full;
    let mut out = preprocess(g);
    if sink_was_full {
        let sink = out.sink();
        out.set_label(sink, full);
    }
    out
}

/// The initial successor set of `e`: every edge endorsed by the labels of
/// both its endpoints (source tails endorse vacuously), restricted to
/// routes from `e`'s head to the sink. Empty for last-stage edges.
pub fn rho(g: &MultiStageGraph, e: EdgeId) -> EdgeSet {
    let head = g.edge(e).head;
    if g.edge(e).stage == g.last_stage() {
        return g.empty_edge_set();
    }
    let source = g.source();
    let mut seed = g.empty_edge_set();
    for f in g.edge_ids() {
        let fe = g.edge(f);
        let tail_ok = fe.tail == source || g.label(fe.tail).contains(e);
        if tail_ok && g.label(fe.head).contains(e) {
            seed.insert(f);
        }
    }
    g.restrict(&seed, head, g.sink())
}

/// Initializes the successor map with [`rho`] for every edge.
pub fn init_rmap(g: &MultiStageGraph) -> RMap {
    RMap {
        sets: g.edge_ids().map(|e| rho(g, e)).collect(),
    }
}

/// Stabilizing prune of `es` toward `v` (never the source): repeatedly
/// drop edges below `v`'s stage with no live route onward to `v`, drop
/// edges at `v`'s stage whose successor set cannot reach the sink, then
/// keep only edges on source-to-`v` routes, until a full round removes
/// nothing. The result is a subset of `es`, and the operator is
/// idempotent.
///
/// Last-stage edges at the sink are exempt from the content tests: their
/// successor sets are empty by construction and say nothing.
pub fn chi(g: &MultiStageGraph, r: &RMap, v: VertexId, es: &EdgeSet) -> EdgeSet {
    chi_inner(g, r, v, es, &mut None)
}

/// [`chi`] with prune reporting, used for the final kernel computation.
fn chi_inner(
    g: &MultiStageGraph,
    r: &RMap,
    v: VertexId,
    es: &EdgeSet,
    tracer: &mut Option<&mut Tracer>,
) -> EdgeSet {
    assert!(v != g.source(), "chi target cannot be the source");
    let l = g.stage_of(v);
    let last = g.last_stage();
    let sink = g.sink();
    let mut cur = es.clone();
    // The at-stage test reads only R(e), fixed for the whole call.
    let mut sink_route: Vec<Option<bool>> = vec![None; g.num_edges()];
    let mut trimmed = false;
    loop {
        let mut changed = false;
        for (id, memo) in sink_route.iter_mut().enumerate() {
            let e = EdgeId(id);
            if !cur.contains(e) {
                continue;
            }
            let k = g.edge(e).stage;
            if k < l {
                if !g.reaches2(r.of(e), &cur, g.edge(e).head, v) {
                    cur.remove(e);
                    changed = true;
                    if let Some(t) = tracer {
                        let name = g.edge_name(e);
                        t.record(TraceKind::ChiPrune, Some(name), None, "no-live-route-to-target");
                    }
                }
            } else if k == l && l != last {
                let dead = *memo.get_or_insert_with(|| !g.reaches(r.of(e), v, sink));
                if dead {
                    cur.remove(e);
                    changed = true;
                    if let Some(t) = tracer {
                        let name = g.edge_name(e);
                        t.record(TraceKind::ChiPrune, Some(name), None, "no-live-route-to-sink");
                    }
                }
            }
            // k == l == last means v is the sink and e arrives at it:
            // never pruned on successor-set content. Edges past stage l
            // fall to the source-route trim below.
        }
        // The source-route trim is idempotent, so when the member rules
        // removed nothing since the last trim the next trim is a no-op.
        if !changed && trimmed {
            return cur;
        }
        let narrowed = g.restrict(&cur, g.source(), v);
        trimmed = true;
        if narrowed != cur {
            if let Some(t) = tracer {
                for e in cur.difference(&narrowed).iter() {
                    let name = g.edge_name(e);
                    t.record(TraceKind::ChiPrune, Some(name), None, "off-source-route");
                }
            }
            cur = narrowed;
            changed = true;
        }
        if !changed {
            return cur;
        }
    }
}

/// Memos for the coupling step. The support set `A` is a pure function
/// of the candidate edge and the current successor-map state, and the
/// per-member route set `W` used by the `B` seed is a pure function of
/// the member, the candidate, and that same state; neither depends on the
/// subject edge. Entries are tagged with a version that bumps on every
/// successor-set mutation, so stale entries are recomputed, never reused.
struct PsiCache {
    version: u64,
    a_entries: Vec<Option<(u64, EdgeSet)>>,
    /// `W(c, e2)` keyed by `c * num_edges + e2`; skipped on graphs large
    /// enough for the quadratic table to hurt.
    w_entries: Option<Vec<Option<(u64, EdgeSet)>>>,
}

const W_CACHE_EDGE_LIMIT: usize = 1500;

impl PsiCache {
    fn new(num_edges: usize) -> Self {
        PsiCache {
            version: 0,
            a_entries: vec![None; num_edges],
            w_entries: (num_edges <= W_CACHE_EDGE_LIMIT)
                .then(|| vec![None; num_edges * num_edges]),
        }
    }

    fn invalidate(&mut self) {
        self.version += 1;
    }
}

/// A for candidate `e2`: edges that can precede `e2` on a route endorsed
/// by its head's label, seeded with `e2` itself, stabilized toward the
/// head.
fn a_set_for(g: &MultiStageGraph, r: &RMap, e2: EdgeId, cache: &mut PsiCache) -> EdgeSet {
    if let Some((version, set)) = &cache.a_entries[e2.0] {
        if *version == cache.version {
            return set.clone();
        }
    }
    let b = g.edge(e2).head;
    let k = g.edge(e2).stage;
    let label_b = g.label(b);
    let t = g.edge(e2).tail;
    let mut seed = g.empty_edge_set();
    if label_b.contains(e2) {
        for xid in 0..g.num_edges() {
            let x = EdgeId(xid);
            if !r.of(x).contains(e2) {
                continue;
            }
            let y = g.edge(x).head;
            if g.stage_of(y) >= k {
                continue;
            }
            // e2 in [R(x) n L(b)]_y^b iff e2 is in the joint set (checked
            // above) and y can reach e2's tail inside it; e2's head is b.
            if y == t || g.reaches2(r.of(x), label_b, y, t) {
                seed.insert(x);
            }
        }
    }
    seed.insert(e2);
    let a = chi(g, r, b, &seed);
    cache.a_entries[e2.0] = Some((cache.version, a.clone()));
    a
}

/// Tests `{e, e2}` against `W(c, e2)`, the routes from `c`'s head to
/// `e2`'s head inside `R(c)` and the current `A(e2)`.
fn w_supports_pair(
    g: &MultiStageGraph,
    r: &RMap,
    c: EdgeId,
    e2: EdgeId,
    a_set: &EdgeSet,
    cache: &mut PsiCache,
    e: EdgeId,
) -> bool {
    let compute = |g: &MultiStageGraph| {
        let joint = r.of(c).intersection(a_set);
        g.restrict(&joint, g.edge(c).head, g.edge(e2).head)
    };
    match &mut cache.w_entries {
        Some(entries) => {
            let idx = c.0 * g.num_edges() + e2.0;
            if let Some((version, set)) = &entries[idx] {
                if *version == cache.version {
                    return set.contains(e) && set.contains(e2);
                }
            }
            let w = compute(g);
            let hit = w.contains(e) && w.contains(e2);
            entries[idx] = Some((cache.version, w));
            hit
        }
        None => {
            let w = compute(g);
            w.contains(e) && w.contains(e2)
        }
    }
}

/// One coupling pass for edge `e = (u, v)` at an interior stage: visits
/// every candidate successor `e2` of `e` in ascending id (hence stage)
/// order, rebuilds the support sets `A` and `B`, prunes `e2` when the
/// joint support is empty, trims `R(e)` back to sink routes, and repeats
/// until `R(e)` is stable. Returns whether anything was removed. `R(e)`
/// only ever shrinks.
fn psi(
    g: &MultiStageGraph,
    r: &mut RMap,
    e: EdgeId,
    tracer: &mut Tracer,
    cache: &mut PsiCache,
) -> bool {
    let u = g.edge(e).tail;
    let v = g.edge(e).head;
    let l = g.edge(e).stage;
    debug_assert!(l > 1 && l < g.last_stage());
    let before_len = r.of(e).len();
    let mut changed_any = false;
    loop {
        let mut changed = false;
        for id in 0..g.num_edges() {
            let e2 = EdgeId(id);
            if !r.of(e).contains(e2) {
                continue;
            }
            debug_assert!(g.edge(e2).stage > l);
            let a_set = a_set_for(g, r, e2, cache);

            // B: edges of A whose successor sets carry both e and e2 on
            // one route to b, stabilized toward u.
            let mut seed_b = g.empty_edge_set();
            if a_set.contains(e) && a_set.contains(e2) {
                for c in a_set.iter() {
                    if !(r.of(c).contains(e) && r.of(c).contains(e2)) {
                        continue;
                    }
                    if w_supports_pair(g, r, c, e2, &a_set, cache, e) {
                        seed_b.insert(c);
                    }
                }
            }
            let b_empty = seed_b.is_empty() || chi(g, r, u, &seed_b).is_empty();

            if b_empty {
                r.of_mut(e).remove(e2);
                cache.invalidate();
                tracer.prunes += 1;
                changed = true;
                if tracer.events.is_some() {
                    let en = g.edge_name(e);
                    let e2n = g.edge_name(e2);
                    tracer.record(TraceKind::PsiPrune, Some(en), Some(e2n), "no-joint-support");
                }
            }
        }

        let narrowed = g.restrict(r.of(e), v, g.sink());
        if &narrowed != r.of(e) {
            let dropped = r.of(e).difference(&narrowed);
            tracer.prunes += dropped.len() as u64;
            if tracer.events.is_some() {
                for d in dropped.iter() {
                    let en = g.edge_name(e);
                    let dn = g.edge_name(d);
                    tracer.record(TraceKind::PsiPrune, Some(en), Some(dn), "off-sink-route");
                }
            }
            *r.of_mut(e) = narrowed;
            cache.invalidate();
            changed = true;
        }

        changed_any |= changed;
        if !changed {
            break;
        }
    }
    debug_assert!(r.of(e).len() <= before_len, "psi must never grow R(e)");
    changed_any
}

/// Runs the full decision procedure: validate (strict mode rejects),
/// preprocess, initialize successor sets, sweep the coupling step over
/// stages `3..=L-1` to a global fixpoint, then read the answer off the
/// kernel set at the sink.
pub fn zh_solve(g: &MultiStageGraph, options: ZhOptions) -> Result<ZhOutcome, KernelError> {
    let started = Instant::now();
    let violations = g.validate_2msp();
    if options.mode == Mode::Strict && !violations.is_empty() {
        return Err(KernelError::InvalidInstance { violations });
    }

    let pg = preprocess(g);
    let mut tracer = Tracer::new(options.trace);

    let mut r = init_rmap(&pg);
    let r0 = r.clone();
    let initial_support = r0.support();
    if tracer.events.is_some() {
        for e in pg.edge_ids() {
            let name = pg.edge_name(e);
            let support = r.of(e).len();
            tracer.record(TraceKind::RhoInit, Some(name), None, &format!("support={support}"));
        }
    }

    let last = pg.last_stage();
    let mut cache = PsiCache::new(pg.num_edges());
    let mut passes = 0u32;
    loop {
        passes += 1;
        tracer.pass = passes;
        let mut changed = false;
        for l in 3..last {
            for id in pg.stage_edges(l) {
                changed |= psi(&pg, &mut r, EdgeId(id), &mut tracer, &mut cache);
            }
        }
        tracer.record(
            TraceKind::FixpointPass,
            None,
            None,
            if changed { "changed" } else { "stable" },
        );
        if !changed {
            break;
        }
    }

    assert!(
        tracer.prunes <= initial_support,
        "prune events exceed initial successor support"
    );
    assert!(
        u64::from(passes) <= tracer.prunes + 1,
        "sweeps without progress"
    );

    tracer.pass = passes + 1;
    let sink = pg.sink();
    let sink_label = pg.label(sink).clone();
    let mut tr = Some(&mut tracer);
    let kernel = chi_inner(&pg, &r, sink, &sink_label, &mut tr);

    let decision = if kernel.is_empty() {
        Decision::No
    } else {
        Decision::Yes
    };
    let stats = ZhStats {
        passes,
        prune_events: tracer.prunes,
        initial_support,
        kernel_size: kernel.len(),
        sweep_order: SWEEP_ORDER,
    };
    Ok(ZhOutcome {
        decision,
        kernel,
        graph: pg,
        rmap: r,
        r0,
        stats,
        trace: tracer.events,
        violations,
        wall_millis: started.elapsed().as_millis() as u64,
    })
}

/// The stabilized kernel set at the sink, containing every sigma path of
/// the instance. Permissive, untraced.
pub fn compact_kernel(g: &MultiStageGraph) -> EdgeSet {
    zh_solve(g, ZhOptions::default())
        .expect("permissive solve cannot reject")
        .kernel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphSpec};
    use crate::oracle::{sigma_path_exists, OracleBudget, OracleDecision};

    /// One vertex per stage, labels exactly the prefix edges: already
    /// hygienic.
    fn chain() -> MultiStageGraph {
        let mut spec = GraphSpec {
            stage_sizes: vec![1, 1, 1, 1, 1, 1],
            edges: (1..=5).map(|s| (0, 0, s)).collect(),
            ..Default::default()
        };
        for s in 1..=5usize {
            spec.labels.insert((s, 0), (0..s).collect());
        }
        build_graph(&spec).unwrap()
    }

    /// Chain whose stage-4 label lost the stage-1 edge: the only path dies
    /// at 4:0, so no sigma path exists.
    fn chain_with_broken_prefix() -> MultiStageGraph {
        let mut spec = GraphSpec {
            stage_sizes: vec![1, 1, 1, 1, 1, 1],
            edges: (1..=5).map(|s| (0, 0, s)).collect(),
            ..Default::default()
        };
        for s in 1..=5usize {
            spec.labels.insert((s, 0), (0..s).collect());
        }
        spec.labels.insert((4, 0), vec![1, 2, 3]);
        spec.labels.insert((5, 0), vec![0, 1, 2, 3, 4]);
        build_graph(&spec).unwrap()
    }

    #[test]
    fn preprocess_is_identity_on_hygienic_labels() {
        let g = chain();
        let p = preprocess(&g);
        for v in g.vertices().skip(1) {
            assert_eq!(g.label(v), p.label(v), "label changed at {}", g.vertex_name(v));
        }
        assert!(p.check_properties().is_empty());
    }

    #[test]
    fn preprocess_trims_unreachable_label_edges() {
        // Two rails without a crossover: the top rail's edges can never
        // appear in bottom-rail labels.
        let mut spec = GraphSpec {
            stage_sizes: vec![1, 2, 2, 2, 2, 1],
            ..Default::default()
        };
        spec.edges.push((0, 0, 1));
        spec.edges.push((0, 1, 1));
        for s in 2..=4 {
            spec.edges.push((0, 0, s));
            spec.edges.push((1, 1, s));
        }
        spec.edges.push((0, 0, 5));
        spec.edges.push((1, 0, 5));
        let n = spec.edges.len();
        for s in 1..=5usize {
            for p in 0..spec.stage_sizes[s] {
                spec.labels.insert((s, p), (0..n).collect());
            }
        }
        let g = build_graph(&spec).unwrap();
        let p = preprocess(&g);
        assert!(p.check_properties().is_empty());
        // The bottom stage-2 vertex keeps only its own history.
        let v = p.vertex_at(2, 1);
        let reach = p.restrict(&p.full_edge_set(), p.source(), v);
        assert_eq!(p.label(v), &reach);
        // Preprocessing preserves the oracle decision.
        assert_eq!(
            sigma_path_exists(&g, OracleBudget::default()),
            sigma_path_exists(&p, OracleBudget::default())
        );
    }

    #[test]
    fn preprocess_enforces_prefix_pairs() {
        // Stage-3 label holds a stage-2 edge but not the stage-1 edge
        // beneath it; the stage-2 edge must be dropped.
        let mut spec = GraphSpec {
            stage_sizes: vec![1, 2, 1, 1, 1, 1],
            edges: vec![(0, 0, 1), (0, 1, 1), (0, 0, 2), (1, 0, 2), (0, 0, 3), (0, 0, 4), (0, 0, 5)],
            ..Default::default()
        };
        let n = spec.edges.len();
        for s in 1..=5usize {
            for p in 0..spec.stage_sizes[s] {
                spec.labels.insert((s, p), (0..n).collect());
            }
        }
        // Label of 3:0: everything except the stage-1 edge 0:0->1:1.
        spec.labels.insert((3, 0), (0..n).filter(|&i| i != 1).collect());
        let g = build_graph(&spec).unwrap();
        let p = preprocess(&g);
        assert!(p.check_properties().is_empty());
        let v = p.vertex_at(3, 0);
        // Edge id 3 is 1:1->2:0@2, the continuation of the missing edge.
        assert!(!p.label(v).contains(EdgeId(3)));
        assert!(p.label(v).contains(EdgeId(2)));
        assert_eq!(
            sigma_path_exists(&g, OracleBudget::default()),
            sigma_path_exists(&p, OracleBudget::default())
        );
    }

    #[test]
    fn preprocess_is_idempotent() {
        for g in [chain(), chain_with_broken_prefix()] {
            let once = preprocess(&g);
            let twice = preprocess(&once);
            for v in g.vertices().skip(1) {
                assert_eq!(once.label(v), twice.label(v));
            }
        }
    }

    #[test]
    fn preprocess_for_emission_round_trips_valid_instances() {
        // Valid emitted instances are a fixpoint: labels already hygienic,
        // sink label full.
        let params =
            crate::generators::MspGenParams { stages: 7, width: 3, density: 0.9, seed: 5 };
        let g = crate::generators::gen_random_msp(&params).unwrap();
        let p = preprocess_for_emission(&g);
        assert!(p.validate_2msp().is_empty());
        assert_eq!(p.label(p.sink()), &p.full_edge_set());
        assert_eq!(g.to_spec(), p.to_spec());
    }

    #[test]
    fn preprocess_for_emission_keeps_partial_sink_labels() {
        // A sink label missing the arriving edge forbids the only path.
        // Restoring it to full would flip the decision, so it must stay
        // trimmed.
        let mut spec = GraphSpec {
            stage_sizes: vec![1, 1, 1, 1, 1, 1],
            edges: (1..=5).map(|s| (0, 0, s)).collect(),
            ..Default::default()
        };
        for s in 1..=5usize {
            spec.labels.insert((s, 0), (0..s).collect());
        }
        spec.labels.insert((5, 0), vec![0, 1, 2, 3]);
        let g = build_graph(&spec).unwrap();
        assert_eq!(sigma_path_exists(&g, OracleBudget::default()), OracleDecision::No);
        let p = preprocess_for_emission(&g);
        assert!(!p.label(p.sink()).contains(EdgeId(4)));
        assert_eq!(sigma_path_exists(&p, OracleBudget::default()), OracleDecision::No);
    }

    #[test]
    fn rho_of_last_stage_edges_is_empty() {
        let g = preprocess(&chain());
        let last = g.last_stage();
        for id in g.stage_edges(last) {
            assert!(rho(&g, EdgeId(id)).is_empty());
        }
    }

    #[test]
    fn rho_on_chain_is_the_suffix() {
        let g = preprocess(&chain());
        // Every label contains its prefix; rho(e_l) collects exactly the
        // later chain edges.
        for id in 0..g.num_edges() {
            let e = EdgeId(id);
            let stage = g.edge(e).stage;
            let want: Vec<usize> = (stage..g.num_edges()).collect();
            let got: Vec<usize> = rho(&g, e).iter().map(|x| x.0).collect();
            if stage == g.last_stage() {
                assert!(got.is_empty());
            } else {
                assert_eq!(got, want, "rho mismatch at edge {}", g.edge_name(e));
            }
        }
    }

    #[test]
    fn chi_of_empty_is_empty() {
        let g = preprocess(&chain());
        let r = init_rmap(&g);
        assert!(chi(&g, &r, g.sink(), &g.empty_edge_set()).is_empty());
    }

    #[test]
    fn chi_keeps_a_live_chain() {
        let g = preprocess(&chain());
        let r = init_rmap(&g);
        let kernel = chi(&g, &r, g.sink(), g.label(g.sink()));
        assert_eq!(kernel, g.full_edge_set());
    }

    #[test]
    fn chi_is_idempotent_and_shrinking() {
        let g = preprocess(&chain_with_broken_prefix());
        let r = init_rmap(&g);
        let sets = [
            g.full_edge_set(),
            g.label(g.vertex_at(4, 0)).clone(),
            g.label(g.sink()).clone(),
        ];
        for es in &sets {
            let once = chi(&g, &r, g.sink(), es);
            assert!(once.is_subset_of(es));
            let twice = chi(&g, &r, g.sink(), &once);
            assert_eq!(once, twice);
            // Pre-trimming to source routes changes nothing.
            let trimmed = g.restrict(es, g.source(), g.sink());
            assert_eq!(chi(&g, &r, g.sink(), &trimmed), once);
        }
    }

    #[test]
    fn solve_accepts_the_chain() {
        let out = zh_solve(&chain(), ZhOptions::default()).unwrap();
        assert_eq!(out.decision, Decision::Yes);
        assert_eq!(out.kernel, out.graph.full_edge_set());
        // Nothing to prune on a single live path.
        assert_eq!(out.stats.prune_events, 0);
        assert_eq!(out.stats.passes, 1);
    }

    #[test]
    fn solve_rejects_broken_chain_with_exact_accounting() {
        // Hand-derived fixpoint for this instance: preprocessing leaves
        // labels {0}, {0,1}, {0,1,2}, {2,3}, {2,3,4}; rho gives R(e2) =
        // {3,4}, R(e3) = {4}, all other sets empty; the coupling sweep
        // removes all three members (each support set loses its source
        // route), and the sink kernel empties out.
        let g = chain_with_broken_prefix();
        assert_eq!(
            sigma_path_exists(&g, OracleBudget::default()),
            OracleDecision::No
        );
        let out = zh_solve(&g, ZhOptions { mode: Mode::Permissive, trace: true }).unwrap();
        assert_eq!(out.decision, Decision::No);
        assert!(out.kernel.is_empty());
        assert_eq!(out.stats.initial_support, 3);
        assert_eq!(out.stats.prune_events, 3);
        assert_eq!(out.stats.passes, 2);
        let trace = out.trace.unwrap();
        let psi_prunes = trace
            .iter()
            .filter(|t| matches!(t.kind, TraceKind::PsiPrune))
            .count();
        assert_eq!(psi_prunes, 3);
        // The final kernel computation logs the removal of the surviving
        // sink-stage edge as it loses its source route.
        assert!(trace.iter().any(|t| matches!(t.kind, TraceKind::ChiPrune)));
    }

    #[test]
    fn strict_mode_rejects_invalid_instances() {
        // The chain is a valid 2-MSP; breaking the sink label invalidates
        // item 6.
        let mut g = chain();
        g.set_label(g.sink(), g.empty_edge_set());
        assert!(matches!(
            zh_solve(&g, ZhOptions { mode: Mode::Strict, trace: false }),
            Err(KernelError::InvalidInstance { .. })
        ));
        // Permissive mode still runs and reports the violations.
        let out = zh_solve(&g, ZhOptions::default()).unwrap();
        assert!(!out.violations.is_empty());
        assert_eq!(out.decision, Decision::No);
    }

    #[test]
    fn compact_kernel_contains_every_sigma_path() {
        use crate::oracle::enumerate_sigma_paths;
        for g in [chain(), chain_with_broken_prefix()] {
            let kernel = compact_kernel(&g);
            for p in enumerate_sigma_paths(&g, OracleBudget::default()).unwrap() {
                assert!(p.is_subset_of(&kernel));
            }
        }
    }
}
