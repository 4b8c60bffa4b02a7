//! On-disk instance format: versioned JSON with provenance and a content
//! hash.
//!
//! The core fields (`format_version`, `stages`, `edges`, `labels`) are
//! hashed in canonical form, so two documents describe the same instance
//! exactly when their hashes match. Provenance records how an instance
//! was produced; seeded generator provenance is sufficient to regenerate
//! the instance byte for byte.

use crate::generators::{
    gen_fn_mu, gen_pigeonhole, gen_random_ksat, gen_random_msp, MspGenParams,
};
use crate::graph::{build_graph, GraphError, GraphSpec, MultiStageGraph};
use crate::reduction::{reduce_full, reduce_plain, split_to_3cnf, CnfFormula};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub const FORMAT_VERSION: u32 = 1;

/// Which reduction carried a formula into the graph model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Degree-bounded construction with coupler stages. Formulas whose
    /// width is not uniformly 2 or 3 are first rewritten to width 3.
    Gadget,
    /// One stage per clause, fully bipartite.
    Plain,
}

/// How an instance came to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Provenance {
    /// The minimally unsatisfiable family over `n` variables, reduced.
    MuFamily { n: usize, route: Route },
    /// Seeded uniform random k-SAT, reduced.
    Ksat {
        num_vars: usize,
        num_clauses: usize,
        k: usize,
        seed: u64,
        rng: String,
        route: Route,
    },
    /// Pigeonhole principle with `holes` holes, reduced.
    Pigeonhole { holes: usize, route: Route },
    /// Seeded structural generator output.
    RandomMsp {
        stages: usize,
        width: usize,
        density: f64,
        seed: u64,
        rng: String,
    },
    /// Parsed from DIMACS text, reduced; not regenerable from this record.
    Dimacs { route: Route },
    /// Loaded from an instance file; not regenerable from this record.
    File,
    Unknown,
}

impl Provenance {
    /// Short tag for logs and file names.
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::MuFamily { .. } => "mu-family",
            Provenance::Ksat { .. } => "ksat",
            Provenance::Pigeonhole { .. } => "pigeonhole",
            Provenance::RandomMsp { .. } => "random-msp",
            Provenance::Dimacs { .. } => "dimacs",
            Provenance::File => "file",
            Provenance::Unknown => "unknown",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("document declares format version {found}, this build reads {supported}")]
    FormatVersionMismatch { found: u32, supported: u32 },
    #[error("label key {0:?} is not 'stage:pos'")]
    BadLabelKey(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub format_version: u32,
    /// Stage sizes including the singleton endpoint stages.
    pub stages: Vec<usize>,
    /// `(tail position, head position, stage)` triples in canonical
    /// order.
    pub edges: Vec<(usize, usize, usize)>,
    /// Label sets keyed by `"stage:pos"`, values are canonical edge ids.
    pub labels: BTreeMap<String, Vec<usize>>,
    pub provenance: Provenance,
    /// SHA-256 of the canonical core fields.
    pub content_hash: String,
}

fn hash_core(
    stages: &[usize],
    edges: &[(usize, usize, usize)],
    labels: &BTreeMap<String, Vec<usize>>,
) -> String {
    let core = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "stages": stages,
        "edges": edges,
        "labels": labels,
    });
    let bytes = serde_json::to_vec(&core).expect("core fields always serialize");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    format!("{:x}", hasher.finalize())
}

pub fn to_doc(g: &MultiStageGraph, provenance: Provenance) -> InstanceDoc {
    let spec = g.to_spec();
    let labels: BTreeMap<String, Vec<usize>> = spec
        .labels
        .into_iter()
        .map(|((stage, pos), ids)| (format!("{stage}:{pos}"), ids))
        .collect();
    let content_hash = hash_core(&spec.stage_sizes, &spec.edges, &labels);
    InstanceDoc {
        format_version: FORMAT_VERSION,
        stages: spec.stage_sizes,
        edges: spec.edges,
        labels,
        provenance,
        content_hash,
    }
}

pub fn to_json(g: &MultiStageGraph, provenance: Provenance) -> String {
    let mut text =
        serde_json::to_string_pretty(&to_doc(g, provenance)).expect("documents always serialize");
    text.push('\n');
    text
}

pub struct LoadedInstance {
    pub graph: MultiStageGraph,
    pub provenance: Provenance,
    /// False when the stored hash does not match the recomputed one;
    /// callers should surface a warning but may proceed.
    pub hash_matched: bool,
}

pub fn from_json(text: &str) -> Result<LoadedInstance, FormatError> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(FormatError::FormatVersionMismatch {
            found: doc.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let mut labels = BTreeMap::new();
    for (key, ids) in &doc.labels {
        let parsed = key
            .split_once(':')
            .and_then(|(s, p)| Some((s.parse::<usize>().ok()?, p.parse::<usize>().ok()?)));
        match parsed {
            Some(pair) => labels.insert(pair, ids.clone()),
            None => return Err(FormatError::BadLabelKey(key.clone())),
        };
    }
    let recomputed = hash_core(&doc.stages, &doc.edges, &doc.labels);
    let spec = GraphSpec {
        stage_sizes: doc.stages,
        edges: doc.edges,
        labels,
    };
    Ok(LoadedInstance {
        graph: build_graph(&spec)?,
        provenance: doc.provenance,
        hash_matched: recomputed == doc.content_hash,
    })
}

/// Carries a formula along the recorded route: gadget reductions rewrite
/// to width 3 first when the width is not uniformly 2 or 3.
pub fn reduce_via(f: &CnfFormula, route: Route) -> Option<MultiStageGraph> {
    match route {
        Route::Gadget => match f.uniform_width() {
            Some(2) | Some(3) => reduce_full(f, false).ok().map(|(g, _)| g),
            _ => reduce_full(&split_to_3cnf(f), false).ok().map(|(g, _)| g),
        },
        Route::Plain => reduce_plain(f, false).ok().map(|(g, _)| g),
    }
}

/// Rebuilds an instance from seeded provenance. Returns `None` for
/// non-regenerable provenance or stale parameters.
pub fn regenerate(p: &Provenance) -> Option<MultiStageGraph> {
    match p {
        Provenance::MuFamily { n, route } => reduce_via(&gen_fn_mu(*n).ok()?, *route),
        Provenance::Ksat {
            num_vars,
            num_clauses,
            k,
            seed,
            rng,
            route,
        } => {
            if rng != crate::generators::RNG_ALGORITHM {
                return None;
            }
            reduce_via(&gen_random_ksat(*num_vars, *num_clauses, *k, *seed).ok()?, *route)
        }
        Provenance::Pigeonhole { holes, route } => {
            reduce_via(&gen_pigeonhole(*holes).ok()?, *route)
        }
        Provenance::RandomMsp {
            stages,
            width,
            density,
            seed,
            rng,
        } => {
            if rng != crate::generators::RNG_ALGORITHM {
                return None;
            }
            gen_random_msp(&MspGenParams {
                stages: *stages,
                width: *width,
                density: *density,
                seed: *seed,
            })
            .ok()
        }
        Provenance::Dimacs { .. } | Provenance::File | Provenance::Unknown => None,
    }
}
