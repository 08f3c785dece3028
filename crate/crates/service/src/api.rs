//! Response bodies and the request logic behind them, shared by the HTTP
//! routes and the command-line interface.

use heapscope_core::analytics::{
    self, parse_composite, refine_focus, refine_hide, refine_split, MatrixStats, VariableSummary,
};
use heapscope_core::query::{evaluate, parse, QueryCache, QueryExpr};
use heapscope_core::store::{ObjectRecord, ObjectVariable, RefEdge};
use heapscope_core::trace::ObjectId;
use serde::Serialize;

use crate::error::ApiError;
use crate::registry::Dataset;
use crate::urls::{matrix_url, query_url};

pub const DEFAULT_OBJECT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryResponse {
    pub dataset: String,
    pub query: String,
    pub canonical_query: String,
    pub count: usize,
    pub objects: Vec<ObjectId>,
    pub truncated: bool,
    pub from_cache: bool,
    pub compute_millis: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<VariableSummary>,
}

pub fn query(
    dataset: &Dataset,
    text: &str,
    vis: Option<&str>,
    cache: &QueryCache,
    object_limit: usize,
) -> Result<QueryResponse, ApiError> {
    let q = parse(text)?;
    if let Some(var) = vis {
        var.parse::<ObjectVariable>()?;
    }
    let result = evaluate(&dataset.store, &q, cache)?;
    let summary = vis
        .map(|var| analytics::summarize(&dataset.store, &result.objects, var))
        .transpose()?;
    let count = result.objects.len();
    let mut objects = result.objects;
    objects.truncate(object_limit);
    Ok(QueryResponse {
        dataset: result.dataset,
        query: text.to_string(),
        canonical_query: result.canonical_query,
        count,
        truncated: objects.len() < count,
        objects,
        from_cache: result.from_cache,
        compute_millis: result.compute_millis,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Refinements {
    pub focus: String,
    pub hide: String,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatrixPart {
    pub query: String,
    pub url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinements: Option<Refinements>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixResponse {
    pub dataset: String,
    pub composite: String,
    pub parts: Vec<MatrixPart>,
    #[serde(flatten)]
    pub stats: MatrixStats,
    /// Query URL per cell: the part itself on the diagonal, the pairwise
    /// `And` elsewhere.
    pub cell_urls: Vec<Vec<String>>,
}

pub fn matrix(
    dataset: &Dataset,
    text: &str,
    cache: &QueryCache,
) -> Result<MatrixResponse, ApiError> {
    let cq = parse_composite(text)?;
    let stats = analytics::matrix(&dataset.store, &cq, cache)?;
    let name = dataset.manifest.name.as_str();
    let n = cq.parts.len();
    let mut parts = Vec::with_capacity(n);
    for (i, q) in cq.parts.iter().enumerate() {
        let refinements = if n >= 2 {
            let k = i + 1;
            Some(Refinements {
                focus: matrix_url(name, &refine_focus(&cq, k)?),
                hide: matrix_url(name, &refine_hide(&cq, k)?),
                split: matrix_url(name, &refine_split(&cq, k)?),
            })
        } else {
            None
        };
        parts.push(MatrixPart {
            query: q.to_string(),
            url: query_url(name, q),
            refinements,
        });
    }
    let cell_urls = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        query_url(name, &cq.parts[i])
                    } else {
                        query_url(
                            name,
                            &QueryExpr::And(vec![cq.parts[i].clone(), cq.parts[j].clone()]),
                        )
                    }
                })
                .collect()
        })
        .collect();
    Ok(MatrixResponse {
        dataset: name.to_string(),
        composite: cq.to_string(),
        parts,
        stats,
        cell_urls,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectResponse {
    #[serde(flatten)]
    pub record: ObjectRecord,
    pub life_time: u64,
    pub outgoing: Vec<RefEdge>,
    pub incoming: Vec<RefEdge>,
}

pub fn object(dataset: &Dataset, id: &str) -> Result<ObjectResponse, ApiError> {
    let parsed = id
        .parse::<u64>()
        .map(ObjectId)
        .map_err(|_| ApiError::unknown_object(id))?;
    let store = &dataset.store;
    let record = store
        .object(parsed)
        .ok_or_else(|| ApiError::unknown_object(id))?
        .clone();
    Ok(ObjectResponse {
        life_time: record.life_time(),
        outgoing: store.edges_from(parsed).cloned().collect(),
        incoming: store.edges_to(parsed).cloned().collect(),
        record,
    })
}
