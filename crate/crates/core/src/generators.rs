//! Instance generators: CNF families with known status and a seeded
//! structural generator for random 2-MSP instances.
//!
//! Everything here is deterministic given its parameters. Randomized
//! generators draw from ChaCha8 seeded with the caller's seed, so an
//! instance can be regenerated byte-for-byte from its recorded
//! provenance.

use crate::graph::{build_graph, GraphSpec, MultiStageGraph};
use crate::kernel::preprocess_for_emission;
use crate::reduction::CnfFormula;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream cipher behind every seeded generator, recorded in provenance so
/// regeneration stays exact across versions.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GenError {
    #[error("stage count {0} is below the minimum of 5")]
    StageCountTooSmall(usize),
    #[error("width {0} is below the minimum of 2")]
    WidthTooSmall(usize),
    #[error("density {0} is outside (0, 1]")]
    BadDensity(f64),
    #[error("family parameter {0} is out of range")]
    BadFamilyParameter(usize),
    #[error("clause width {k} exceeds the {num_vars} available variables")]
    InfeasibleKsat { k: usize, num_vars: usize },
    #[error("no structure realized after {attempts} deterministic attempts")]
    GenerationFailed { attempts: usize },
}

/// The minimally unsatisfiable family over `n` variables: one width-`n`
/// clause per subset `T` of the variables, negating exactly the variables
/// in `T`. The clause for `T` is falsified only by the assignment that
/// sets exactly `T` true, so the family is unsatisfiable and dropping any
/// single clause makes it satisfiable. Clauses are ordered by subset size
/// and then by subset bitmask; literals by variable index.
pub fn gen_fn_mu(n: usize) -> Result<CnfFormula, GenError> {
    if n == 0 || n > 16 {
        return Err(GenError::BadFamilyParameter(n));
    }
    let mut masks: Vec<u32> = (0..1u32 << n).collect();
    masks.sort_by_key(|&m| (m.count_ones(), m));
    let clauses = masks
        .iter()
        .map(|&mask| {
            (1..=n as i32)
                .map(|v| if mask >> (v - 1) & 1 == 1 { -v } else { v })
                .collect()
        })
        .collect();
    Ok(CnfFormula { num_vars: n, clauses })
}

/// Uniform random k-SAT: `m` clauses, each over `k` distinct variables
/// chosen by partial shuffle, each literal negated with probability one
/// half. Literals are sorted by variable index within each clause.
pub fn gen_random_ksat(
    num_vars: usize,
    num_clauses: usize,
    k: usize,
    seed: u64,
) -> Result<CnfFormula, GenError> {
    if k == 0 || num_vars == 0 {
        return Err(GenError::BadFamilyParameter(k.min(num_vars)));
    }
    if k > num_vars {
        return Err(GenError::InfeasibleKsat { k, num_vars });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<i32> = (1..=num_vars as i32).collect();
    let clauses = (0..num_clauses)
        .map(|_| {
            let (chosen, _) = pool.partial_shuffle(&mut rng, k);
            let mut clause: Vec<i32> = chosen.to_vec();
            clause.sort_unstable();
            for lit in &mut clause {
                if rng.gen_bool(0.5) {
                    *lit = -*lit;
                }
            }
            clause
        })
        .collect();
    Ok(CnfFormula { num_vars, clauses })
}

/// The pigeonhole principle with `holes + 1` pigeons: unsatisfiable for
/// every `holes >= 1`. Variable `(i - 1) * holes + j` says pigeon `i`
/// sits in hole `j`. Clause widths are mixed (`holes` and 2), so this
/// family feeds the plain reduction or a width-3 rewrite.
pub fn gen_pigeonhole(holes: usize) -> Result<CnfFormula, GenError> {
    if holes == 0 || holes > 16 {
        return Err(GenError::BadFamilyParameter(holes));
    }
    let pigeons = holes + 1;
    let var = |pigeon: usize, hole: usize| ((pigeon - 1) * holes + hole) as i32;
    let mut clauses = Vec::new();
    for pigeon in 1..=pigeons {
        clauses.push((1..=holes).map(|h| var(pigeon, h)).collect());
    }
    for hole in 1..=holes {
        for a in 1..=pigeons {
            for b in a + 1..=pigeons {
                clauses.push(vec![-var(a, hole), -var(b, hole)]);
            }
        }
    }
    Ok(CnfFormula { num_vars: pigeons * holes, clauses })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MspGenParams {
    /// Number of stages `L` (at least 5).
    pub stages: usize,
    /// Size cap for the wide stages (at least 2). Stages that must stay
    /// narrow to respect the degree rules ignore the cap.
    pub width: usize,
    /// Probability that a reachable edge enters a sampled label.
    pub density: f64,
    pub seed: u64,
}

/// Draws an unordered pair of distinct tail positions for each head such
/// that every tail is used at least once and none more than `cap` times.
fn sample_pairs(
    rng: &mut ChaCha8Rng,
    tails: usize,
    heads: usize,
    cap: usize,
) -> Option<Vec<(usize, usize)>> {
    debug_assert!(tails >= 2);
    'tries: for _ in 0..200 {
        let mut use_count = vec![0usize; tails];
        let mut pairs = Vec::with_capacity(heads);
        for _ in 0..heads {
            let a = rng.gen_range(0..tails);
            let b = rng.gen_range(0..tails - 1);
            let b = if b >= a { b + 1 } else { b };
            let (a, b) = (a.min(b), a.max(b));
            use_count[a] += 1;
            use_count[b] += 1;
            pairs.push((a, b));
        }
        for &c in &use_count {
            if c == 0 || c > cap {
                continue 'tries;
            }
        }
        return Some(pairs);
    }
    None
}

/// Assigns one tail to each head, covering every tail, using none more
/// than `cap` times. Requires `tails <= heads <= cap * tails`.
fn sample_onto(
    rng: &mut ChaCha8Rng,
    tails: usize,
    heads: usize,
    cap: usize,
) -> Vec<usize> {
    debug_assert!(tails <= heads && heads <= cap * tails);
    let mut order: Vec<usize> = (0..heads).collect();
    order.shuffle(rng);
    let mut cover: Vec<usize> = (0..tails).collect();
    cover.shuffle(rng);
    let mut assignment = vec![usize::MAX; heads];
    let mut use_count = vec![0usize; tails];
    for (i, &head) in order.iter().enumerate() {
        let tail = if i < tails {
            cover[i]
        } else {
            loop {
                let t = rng.gen_range(0..tails);
                if use_count[t] < cap {
                    break t;
                }
            }
        };
        use_count[tail] += 1;
        assignment[head] = tail;
    }
    assignment
}

/// Seeded structural generator for valid 2-MSP instances.
///
/// The shape has three zones. A multi-in zone (stages 2 up to a random
/// cut) where every vertex has in-degree exactly two, which forces stage
/// sizes into {2, 3} and non-increasing order. A single-in corridor after
/// the cut, wired by per-stage permutations, where in- and out-degrees
/// are pinned to one. A final expansion into the next-to-last stage,
/// which must be single-in but may grow, followed by one edge per vertex
/// into the sink. Out-degrees never exceed in-degrees on the stages where
/// that is required, at most three vertices share a stage wherever
/// multi-in vertices live, and the sink label is the full edge set, so
/// the output always validates.
///
/// Labels are sampled per vertex from its source-reachable edges at the
/// given density, each first-stage vertex keeps its own source edge, and
/// the result is run through label preprocessing so the emitted labels
/// are already hygienic; the sink label is then restored to the full set,
/// which leaves the prefix condition at the sink vacuous, exactly as it
/// was before preprocessing.
pub fn gen_random_msp(params: &MspGenParams) -> Result<MultiStageGraph, GenError> {
    let l = params.stages;
    if l < 5 {
        return Err(GenError::StageCountTooSmall(l));
    }
    if params.width < 2 {
        return Err(GenError::WidthTooSmall(params.width));
    }
    if !(params.density > 0.0 && params.density <= 1.0) {
        return Err(GenError::BadDensity(params.density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let attempts = 32;
    for _ in 0..attempts {
        if let Some(g) = try_structure(params, &mut rng) {
            let g = sample_labels(g, params.density, &mut rng);
            debug_assert!(g.validate_2msp().is_empty(), "generator emitted an invalid instance");
            return Ok(g);
        }
    }
    Err(GenError::GenerationFailed { attempts })
}

fn try_structure(params: &MspGenParams, rng: &mut ChaCha8Rng) -> Option<MultiStageGraph> {
    let l = params.stages;
    let width = params.width;
    // Multi-in zone covers stages 2..=cut.
    let cut = rng.gen_range(2..=l - 2);

    let mut sizes = vec![0usize; l + 1];
    sizes[0] = 1;
    sizes[l] = 1;
    let cap3 = width.min(3);
    sizes[2] = rng.gen_range(2..=cap3);
    for s in 3..=cut {
        sizes[s] = rng.gen_range(2..=sizes[s - 1]);
    }
    sizes[1] = rng.gen_range(2..=width.min(2 * sizes[2]));
    // Corridor stages keep one size; growth happens only into L-1.
    let corridor = if cut < l - 2 {
        let c = rng.gen_range(sizes[cut]..=width.min(2 * sizes[cut]).max(sizes[cut]));
        sizes[cut + 1..=l - 2].fill(c);
        c
    } else {
        sizes[cut]
    };
    let before_last = rng.gen_range(corridor..=width.min(2 * corridor).max(corridor));
    sizes[l - 1] = before_last;

    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for p in 0..sizes[1] {
        edges.push((0, p, 1));
    }
    // Multi-in zone: two distinct tails per head, tails covered, tail
    // out-degree capped at two.
    for stage in 2..=cut {
        let pairs = sample_pairs(rng, sizes[stage - 1], sizes[stage], 2)?;
        for (head, (a, b)) in pairs.into_iter().enumerate() {
            edges.push((a, head, stage));
            edges.push((b, head, stage));
        }
    }
    if cut < l - 2 {
        // Zone boundary: the corridor entry is single-in and must cover
        // the last multi-in stage without exceeding its in-degree.
        for (head, tail) in sample_onto(rng, sizes[cut], corridor, 2).into_iter().enumerate() {
            edges.push((tail, head, cut + 1));
        }
        for stage in cut + 2..=l - 2 {
            let mut perm: Vec<usize> = (0..corridor).collect();
            perm.shuffle(rng);
            for (tail, &head) in perm.iter().enumerate() {
                edges.push((tail, head, stage));
            }
        }
    }
    // Expansion into the single-in next-to-last stage; its tails sit at
    // stage L-2, where the out-degree rule no longer applies.
    for (head, tail) in sample_onto(rng, sizes[l - 2], before_last, 2).into_iter().enumerate() {
        edges.push((tail, head, l - 1));
    }
    for p in 0..before_last {
        edges.push((p, 0, l));
    }

    let num_edges = edges.len();
    let mut labels = std::collections::BTreeMap::new();
    for (stage, &size) in sizes.iter().enumerate().skip(1) {
        for pos in 0..size {
            labels.insert((stage, pos), (0..num_edges).collect());
        }
    }
    let spec = GraphSpec { stage_sizes: sizes, edges, labels };
    build_graph(&spec).ok()
}

fn sample_labels(mut g: MultiStageGraph, density: f64, rng: &mut ChaCha8Rng) -> MultiStageGraph {
    let full = g.full_edge_set();
    let source = g.source();
    for v in g.vertices().skip(1) {
        let reach = g.restrict(&full, source, v);
        let mut label = g.empty_edge_set();
        for e in reach.iter() {
            if rng.gen_bool(density) {
                label.insert(e);
            }
        }
        g.set_label(v, label);
    }
    for a in g.stage_vertices(1) {
        let own = g.in_edges(a)[0];
        let mut label = g.label(a).clone();
        label.insert(own);
        g.set_label(a, label);
    }
    g.set_label(g.sink(), full);
    preprocess_for_emission(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{sat_brute_force, sigma_path_exists, OracleBudget, OracleDecision};
    use crate::reduction::reduce_full;

    #[test]
    fn mu_family_f2_exact_clause_order() {
        let f = gen_fn_mu(2).unwrap();
        assert_eq!(
            f.clauses,
            vec![vec![1, 2], vec![-1, 2], vec![1, -2], vec![-1, -2]]
        );
    }

    #[test]
    fn mu_family_is_minimally_unsatisfiable() {
        for n in [2usize, 3] {
            let f = gen_fn_mu(n).unwrap();
            assert_eq!(f.clauses.len(), 1 << n);
            assert_eq!(f.uniform_width(), Some(n));
            assert!(sat_brute_force(f.num_vars, &f.clauses).unwrap().is_none());
            for drop in 0..f.clauses.len() {
                let mut sub = f.clauses.clone();
                sub.remove(drop);
                assert!(
                    sat_brute_force(f.num_vars, &sub).unwrap().is_some(),
                    "dropping clause {drop} of the {n}-variable family must satisfy"
                );
            }
        }
    }

    #[test]
    fn mu_family_f3_reduces_to_known_size() {
        let f = gen_fn_mu(3).unwrap();
        let (g, _) = reduce_full(&f, true).unwrap();
        // Eight width-3 clauses: 17 stages, 93 edges, 50 vertices.
        assert_eq!(g.last_stage(), 17);
        assert_eq!(g.num_edges(), 93);
        assert_eq!(g.num_vertices(), 50);
        assert!(g.validate_2msp().is_empty());
    }

    #[test]
    fn ksat_is_deterministic_and_well_formed() {
        let a = gen_random_ksat(10, 42, 3, 7).unwrap();
        let b = gen_random_ksat(10, 42, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_random_ksat(10, 42, 3, 8).unwrap();
        assert_ne!(a, c, "different seeds should differ");
        a.validate().unwrap();
        assert_eq!(a.clauses.len(), 42);
        for clause in &a.clauses {
            assert_eq!(clause.len(), 3);
            let mut vars: Vec<i32> = clause.iter().map(|l| l.abs()).collect();
            vars.dedup();
            assert_eq!(vars.len(), 3, "variables must be distinct: {clause:?}");
            assert!(vars.windows(2).all(|w| w[0] < w[1]), "sorted by variable");
        }
        assert!(matches!(
            gen_random_ksat(2, 5, 3, 0),
            Err(GenError::InfeasibleKsat { k: 3, num_vars: 2 })
        ));
    }

    #[test]
    fn pigeonhole_is_unsatisfiable() {
        for holes in [1usize, 2] {
            let f = gen_pigeonhole(holes).unwrap();
            f.validate().unwrap();
            assert!(sat_brute_force(f.num_vars, &f.clauses).unwrap().is_none());
        }
    }

    #[test]
    fn random_msp_outputs_validate() {
        for seed in 0..30u64 {
            let params = MspGenParams {
                stages: 5 + (seed % 5) as usize,
                width: 2 + (seed % 3) as usize,
                density: 0.9,
                seed,
            };
            let g = gen_random_msp(&params).unwrap();
            let violations = g.validate_2msp();
            assert!(violations.is_empty(), "seed {seed}: {violations:?}");
            assert_eq!(g.last_stage(), params.stages);
            assert!(crate::kernel::preprocess(&g).check_properties().is_empty(), "seed {seed}");
            // Sink label stays full, first-stage vertices keep their own
            // source edge.
            assert_eq!(g.label(g.sink()), &g.full_edge_set());
            for a in g.stage_vertices(1) {
                assert!(g.label(a).contains(g.in_edges(a)[0]));
            }
        }
    }

    #[test]
    fn random_msp_is_deterministic() {
        let params = MspGenParams { stages: 8, width: 4, density: 0.85, seed: 123 };
        let a = gen_random_msp(&params).unwrap();
        let b = gen_random_msp(&params).unwrap();
        assert_eq!(a.to_spec(), b.to_spec());
        let c = gen_random_msp(&MspGenParams { seed: 124, ..params }).unwrap();
        assert_ne!(a.to_spec(), c.to_spec());
    }

    #[test]
    fn random_msp_rejects_bad_parameters() {
        let base = MspGenParams { stages: 8, width: 3, density: 0.9, seed: 0 };
        assert!(matches!(
            gen_random_msp(&MspGenParams { stages: 4, ..base }),
            Err(GenError::StageCountTooSmall(4))
        ));
        assert!(matches!(
            gen_random_msp(&MspGenParams { width: 1, ..base }),
            Err(GenError::WidthTooSmall(1))
        ));
        assert!(matches!(
            gen_random_msp(&MspGenParams { density: 0.0, ..base }),
            Err(GenError::BadDensity(_))
        ));
    }

    #[test]
    fn random_msp_instances_are_oracle_decidable() {
        let mut yes = 0;
        let mut no = 0;
        for seed in 0..40u64 {
            let params = MspGenParams { stages: 7, width: 3, density: 0.92, seed };
            let g = gen_random_msp(&params).unwrap();
            match sigma_path_exists(&g, OracleBudget::default()) {
                OracleDecision::Yes => yes += 1,
                OracleDecision::No => no += 1,
                OracleDecision::Unknown => panic!("seed {seed} exceeded the oracle budget"),
            }
        }
        // The sampler must produce both outcomes at this density.
        assert!(yes > 0, "no satisfiable instances in 40 seeds");
        assert!(no > 0, "no unsatisfiable instances in 40 seeds");
    }
}
