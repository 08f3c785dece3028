//! Presentation data over selections: composite-query matrices, the
//! focus/hide/split refinements, and per-variable summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::query::{evaluate_set, parse, CacheError, ObjSet, ParseError, QueryCache, QueryExpr};
use crate::store::{DatasetStore, ObjectVariable, StoreError, VarValue};
use crate::trace::ObjectId;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("part {part} is empty")]
    EmptyPart { part: usize },
    #[error("part {part}: {error}")]
    Parse { part: usize, error: ParseError },
    #[error("part index {k} out of range 1..={n}")]
    PartIndex { k: usize, n: usize },
    #[error("refinement needs at least two parts")]
    SinglePart,
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Variable(#[from] StoreError),
}

/// Slash-separated list of queries, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeQuery {
    pub parts: Vec<QueryExpr>,
}

impl fmt::Display for CompositeQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, q) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

/// Part numbers in errors are 1-based.
pub fn parse_composite(text: &str) -> Result<CompositeQuery, AnalyticsError> {
    let raw: Vec<&str> = text.split('/').collect();
    if let Some(i) = raw.iter().position(|p| p.trim().is_empty()) {
        return Err(AnalyticsError::EmptyPart { part: i + 1 });
    }
    let parts = raw
        .iter()
        .enumerate()
        .map(|(i, p)| parse(p).map_err(|error| AnalyticsError::Parse { part: i + 1, error }))
        .collect::<Result<_, _>>()?;
    Ok(CompositeQuery { parts })
}

fn check_index(cq: &CompositeQuery, k: usize) -> Result<(), AnalyticsError> {
    let n = cq.parts.len();
    if n < 2 {
        return Err(AnalyticsError::SinglePart);
    }
    if k == 0 || k > n {
        return Err(AnalyticsError::PartIndex { k, n });
    }
    Ok(())
}

fn wrap_others(cq: &CompositeQuery, k: usize, head: &QueryExpr) -> Vec<QueryExpr> {
    cq.parts
        .iter()
        .enumerate()
        .filter(|(i, _)| i + 1 != k)
        .map(|(_, q)| QueryExpr::And(vec![head.clone(), q.clone()]))
        .collect()
}

/// Drops part `k` and intersects every other part with it.
pub fn refine_focus(cq: &CompositeQuery, k: usize) -> Result<CompositeQuery, AnalyticsError> {
    check_index(cq, k)?;
    Ok(CompositeQuery {
        parts: wrap_others(cq, k, &cq.parts[k - 1]),
    })
}

/// Drops part `k` and removes its selection from every other part.
pub fn refine_hide(cq: &CompositeQuery, k: usize) -> Result<CompositeQuery, AnalyticsError> {
    check_index(cq, k)?;
    Ok(CompositeQuery {
        parts: wrap_others(cq, k, &QueryExpr::negate(cq.parts[k - 1].clone())),
    })
}

/// Replaces every other part by its focused and hidden halves; all focused
/// halves come first.
pub fn refine_split(cq: &CompositeQuery, k: usize) -> Result<CompositeQuery, AnalyticsError> {
    check_index(cq, k)?;
    let mut parts = wrap_others(cq, k, &cq.parts[k - 1]);
    parts.extend(wrap_others(
        cq,
        k,
        &QueryExpr::negate(cq.parts[k - 1].clone()),
    ));
    Ok(CompositeQuery { parts })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixStats {
    pub n: usize,
    pub universe_size: u64,
    /// `cells[i][j] = |q_i ∩ q_j|`.
    pub cells: Vec<Vec<u64>>,
    /// Cells as integer percent of the universe, rounded half up.
    pub percents: Vec<Vec<u32>>,
}

pub fn percent(count: u64, universe: u64) -> u32 {
    if universe == 0 {
        return 0;
    }
    ((200 * count as u128 + universe as u128) / (2 * universe as u128)) as u32
}

pub fn matrix(
    store: &DatasetStore,
    cq: &CompositeQuery,
    cache: &QueryCache,
) -> Result<MatrixStats, AnalyticsError> {
    let sets = cq
        .parts
        .iter()
        .map(|q| evaluate_set(store, q, cache).map(|o| o.set))
        .collect::<Result<Vec<_>, _>>()?;
    let n = sets.len();
    let universe = store.objects().len() as u64;
    let mut cells = vec![vec![0u64; n]; n];
    for i in 0..n {
        cells[i][i] = sets[i].len() as u64;
        for j in i + 1..n {
            let mut both: ObjSet = (*sets[i]).clone();
            both.intersect_with(&sets[j]);
            cells[i][j] = both.len() as u64;
            cells[j][i] = cells[i][j];
        }
    }
    let percents = cells
        .iter()
        .map(|row| row.iter().map(|&c| percent(c, universe)).collect())
        .collect();
    Ok(MatrixStats {
        n,
        universe_size: universe,
        cells,
        percents,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SummaryData {
    Categorical {
        counts: Vec<CategoryCount>,
    },
    #[serde(rename_all = "camelCase")]
    Numerical {
        bins: Vec<Bin>,
        box_stats: Option<BoxStats>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub variable: String,
    pub total: u64,
    #[serde(flatten)]
    pub data: SummaryData,
}

/// Ids absent from the store are skipped.
pub fn summarize(
    store: &DatasetStore,
    objects: &[ObjectId],
    variable: &str,
) -> Result<VariableSummary, AnalyticsError> {
    let var: ObjectVariable = variable.parse()?;
    let values: Vec<VarValue> = objects
        .iter()
        .filter_map(|&id| store.object(id))
        .map(|o| var.of(o))
        .collect();
    let total = values.len() as u64;
    let data = if var.is_categorical() {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for v in values {
            if let VarValue::Text(t) = v {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut counts: Vec<CategoryCount> = counts
            .into_iter()
            .map(|(value, count)| CategoryCount { value, count })
            .collect();
        counts.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
        SummaryData::Categorical { counts }
    } else {
        let mut xs: Vec<f64> = values
            .into_iter()
            .filter_map(|v| match v {
                VarValue::Number(x) => Some(x),
                VarValue::Text(_) => None,
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        SummaryData::Numerical {
            bins: histogram(&xs),
            box_stats: box_stats(&xs),
        }
    };
    Ok(VariableSummary {
        variable: var.name().to_string(),
        total,
        data,
    })
}

/// Equal-width bins over `[min, max]` of sorted `xs`; the top edge falls in
/// the last bin.
pub fn histogram(xs: &[f64]) -> Vec<Bin> {
    let (Some(&min), Some(&max)) = (xs.first(), xs.last()) else {
        return Vec::new();
    };
    let width = (max - min) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<Bin> = (0..HISTOGRAM_BINS)
        .map(|i| Bin {
            lower: min + width * i as f64,
            upper: if i + 1 == HISTOGRAM_BINS {
                max
            } else {
                min + width * (i + 1) as f64
            },
            count: 0,
        })
        .collect();
    for &x in xs {
        let i = if width > 0.0 {
            (((x - min) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        bins[i].count += 1;
    }
    bins
}

/// Quartiles by linear interpolation between closest ranks.
pub fn box_stats(sorted: &[f64]) -> Option<BoxStats> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let quantile = |p: f64| {
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Some(BoxStats {
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: sorted[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ingest;
    use crate::trace::TraceFile;
    use crate::tracegen::t0_events;

    fn t0() -> DatasetStore {
        ingest(
            &TraceFile {
                events: t0_events(),
            },
            "test",
        )
        .unwrap()
    }

    fn refined(
        text: &str,
        k: usize,
        f: fn(&CompositeQuery, usize) -> Result<CompositeQuery, AnalyticsError>,
    ) -> String {
        f(&parse_composite(text).unwrap(), k).unwrap().to_string()
    }

    #[test]
    fn composite_parts() {
        assert_eq!(
            parse_composite("ImmutableObj()/HeapUniqueObj()/TinyObj()")
                .unwrap()
                .parts
                .len(),
            3
        );
        assert_eq!(parse_composite("Obj()").unwrap().parts.len(), 1);
    }

    #[test]
    fn empty_part_reported_before_parse_errors() {
        assert!(matches!(
            parse_composite("A()//B()"),
            Err(AnalyticsError::EmptyPart { part: 2 })
        ));
        assert!(matches!(
            parse_composite("Obj()/"),
            Err(AnalyticsError::EmptyPart { part: 2 })
        ));
    }

    #[test]
    fn parse_error_names_part() {
        assert!(matches!(
            parse_composite("Obj()/Frob()"),
            Err(AnalyticsError::Parse { part: 2, .. })
        ));
    }

    #[test]
    fn focus_examples() {
        assert_eq!(
            refined(
                "InstanceOf(java.lang.String)/HeapUniqueObj()",
                2,
                refine_focus
            ),
            "And(HeapUniqueObj() InstanceOf(java.lang.String))"
        );
        assert_eq!(
            refined("Obj()/TinyObj()/MutableObj()", 3, refine_focus),
            "And(MutableObj() Obj())/And(MutableObj() TinyObj())"
        );
    }

    #[test]
    fn hide_examples() {
        assert_eq!(
            refined(
                "InstanceOf(java.lang.String)/HeapUniqueObj()",
                2,
                refine_hide
            ),
            "And(Not(HeapUniqueObj()) InstanceOf(java.lang.String))"
        );
        assert_eq!(
            refined("Obj()/TinyObj()", 1, refine_hide),
            "And(Not(Obj()) TinyObj())"
        );
    }

    #[test]
    fn split_orders_focused_pairs_first() {
        assert_eq!(
            refined("AgeOrderedObj()/ReverseAgeOrderedObj()/InstanceOf(j.l.String)", 3, refine_split),
            "And(InstanceOf(j.l.String) AgeOrderedObj())/And(InstanceOf(j.l.String) ReverseAgeOrderedObj())/\
             And(Not(InstanceOf(j.l.String)) AgeOrderedObj())/And(Not(InstanceOf(j.l.String)) ReverseAgeOrderedObj())"
        );
    }

    #[test]
    fn refinement_needs_two_parts() {
        let one = parse_composite("Obj()").unwrap();
        assert!(matches!(
            refine_focus(&one, 1),
            Err(AnalyticsError::SinglePart)
        ));
        assert!(matches!(
            refine_hide(&one, 1),
            Err(AnalyticsError::SinglePart)
        ));
        assert!(matches!(
            refine_split(&one, 1),
            Err(AnalyticsError::SinglePart)
        ));
        let two = parse_composite("Obj()/TinyObj()").unwrap();
        assert!(matches!(
            refine_focus(&two, 3),
            Err(AnalyticsError::PartIndex { k: 3, n: 2 })
        ));
        assert!(matches!(
            refine_focus(&two, 0),
            Err(AnalyticsError::PartIndex { .. })
        ));
    }

    #[test]
    fn t0_matrix() {
        let store = t0();
        let cache = QueryCache::in_memory();
        let m = matrix(
            &store,
            &parse_composite("MutableObj()/TinyObj()").unwrap(),
            &cache,
        )
        .unwrap();
        assert_eq!(m.universe_size, 2);
        assert_eq!(m.cells, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(m.percents, vec![vec![50, 0], vec![0, 50]]);
        let all = matrix(&store, &parse_composite("Obj()/Obj()").unwrap(), &cache).unwrap();
        assert_eq!(all.cells, vec![vec![2, 2], vec![2, 2]]);
        assert_eq!(all.percents, vec![vec![100, 100], vec![100, 100]]);
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent(1, 8), 13);
        assert_eq!(percent(1, 200), 1);
        assert_eq!(percent(1, 201), 0);
        assert_eq!(percent(0, 0), 0);
        assert_eq!(percent(3, 4), 75);
    }

    #[test]
    fn t0_klass_summary() {
        let store = t0();
        let s = summarize(&store, &[ObjectId(1), ObjectId(2)], "klass").unwrap();
        assert_eq!(
            s.data,
            SummaryData::Categorical {
                counts: vec![
                    CategoryCount {
                        value: "A".into(),
                        count: 1
                    },
                    CategoryCount {
                        value: "B".into(),
                        count: 1
                    },
                ]
            }
        );
        assert_eq!(s.total, 2);
    }

    #[test]
    fn empty_selection_summary() {
        let store = t0();
        let s = summarize(&store, &[], "lifeTime").unwrap();
        assert_eq!(s.total, 0);
        assert_eq!(
            s.data,
            SummaryData::Numerical {
                bins: vec![],
                box_stats: None
            }
        );
        let c = summarize(&store, &[], "klass").unwrap();
        assert_eq!(c.data, SummaryData::Categorical { counts: vec![] });
    }

    #[test]
    fn single_object_numerical_summary() {
        let store = t0();
        let s = summarize(&store, &[ObjectId(2)], "lifeTime").unwrap();
        let SummaryData::Numerical {
            bins,
            box_stats: Some(b),
        } = s.data
        else {
            panic!("numerical")
        };
        assert_eq!(b.min, 4.0);
        assert_eq!(b.min, b.max);
        assert_eq!(b.median, b.min);
        assert_eq!(bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(bins.iter().map(|b| b.count).sum::<u64>(), 1);
    }

    #[test]
    fn unknown_variable() {
        assert!(matches!(
            summarize(&t0(), &[], "colour"),
            Err(AnalyticsError::Variable(StoreError::UnknownVariable(_)))
        ));
    }

    #[test]
    fn quartiles_interpolate() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn histogram_puts_max_in_last_bin() {
        let bins = histogram(&[0.0, 10.0, 20.0]);
        assert_eq!(bins.len(), HISTOGRAM_BINS);
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins[10].count, 1);
        assert_eq!(bins[19].count, 1);
    }
}
