//! Bidirectional retrieval evaluation: cosine ranking over the projected
//! split, with full-list mean average precision (optionally cut off at K) in
//! both directions and per-category breakdowns.
//!
//! A gallery item is relevant iff it shares the query's category; the query's
//! own paired opposite-modality item stays in the gallery. Ties in similarity
//! break by ascending instance id so that rankings, and therefore every
//! reported number, are reproducible across platforms.

use std::io::{self, Write};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::loss::Direction;
use crate::numerics::Vector;
use crate::projection::ProjectionNetwork;

/// Average precision of a binary relevance sequence:
/// `AP = (1/R) · Σ_k Prec@k · rel(k)` over the full list, 0 when nothing is
/// relevant.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// AP over the top `k` positions, normalized by `min(R, k)` with `R` the
/// relevant count of the full list.
pub fn average_precision_at_k(relevance: &[bool], k: usize) -> f64 {
    let total_relevant = relevance.iter().filter(|&&r| r).count();
    if total_relevant == 0 || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant.min(k) as f64
}

/// Gallery ids ordered by descending cosine similarity to the query, ties
/// broken by ascending id.
pub fn rank_gallery(query: &Vector, gallery: &[(usize, Vector)]) -> Result<Vec<usize>> {
    let mut scored = Vec::with_capacity(gallery.len());
    for (id, item) in gallery {
        if item.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                context: "rank_gallery",
                left: query.dim(),
                right: item.dim(),
            });
        }
        scored.push((*id, query.dot(item).clamp(-1.0, 1.0)));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("similarities are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().map(|(id, _)| id).collect())
}

/// A query's full ranking of the opposite-modality gallery.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub query_id: usize,
    pub direction: Direction,
    pub ranked_ids: Vec<usize>,
}

/// Mean AP of the queries of one category in one direction.
#[derive(Debug, Clone)]
pub struct CategoryAp {
    pub direction: Direction,
    pub category: usize,
    pub ap_mean: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub map_i2t: f64,
    pub map_t2i: f64,
    /// Exactly `(map_i2t + map_t2i) / 2`.
    pub map_avg: f64,
    pub per_category: Vec<CategoryAp>,
    /// Total queries over both directions.
    pub query_count: usize,
    pub at_k: Option<usize>,
}

impl EvalReport {
    /// `eval.csv`: per-category rows, then per-direction summaries
    /// (`category=*`), then the overall average.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "direction,category,ap_mean,n_queries")?;
        for row in &self.per_category {
            writeln!(
                w,
                "{},{},{},{}",
                row.direction.as_str(),
                row.category,
                row.ap_mean,
                row.n_queries
            )?;
        }
        let per_direction = self.query_count / 2;
        writeln!(w, "i2t,*,{},{}", self.map_i2t, per_direction)?;
        writeln!(w, "t2i,*,{},{}", self.map_t2i, per_direction)?;
        writeln!(w, "avg,*,{},{}", self.map_avg, self.query_count)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Console summary shaped like the usual results-table row.
    pub fn table_string(&self) -> String {
        let header = match self.at_k {
            Some(k) => format!("mAP@{k}"),
            None => "mAP".to_string(),
        };
        format!(
            "{:<8} {:>8} {:>8} {:>8}\n{:<8} {:>8.4} {:>8.4} {:>8.4}",
            "", "I->T", "T->I", "Avg", header, self.map_i2t, self.map_t2i, self.map_avg
        )
    }
}

/// Projects the split in eval mode and scores both retrieval directions.
pub fn evaluate(
    net_v: &ProjectionNetwork,
    net_t: &ProjectionNetwork,
    ds: &Dataset,
    split: Split,
) -> Result<EvalReport> {
    evaluate_at_k(net_v, net_t, ds, split, None)
}

pub fn evaluate_at_k(
    net_v: &ProjectionNetwork,
    net_t: &ProjectionNetwork,
    ds: &Dataset,
    split: Split,
    at_k: Option<usize>,
) -> Result<EvalReport> {
    let indices = ds.split_indices(split);
    if indices.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split '{}' is empty",
            split.as_str()
        )));
    }

    let mut visual = Vec::with_capacity(indices.len());
    let mut textual = Vec::with_capacity(indices.len());
    let mut categories = std::collections::HashMap::new();
    for &idx in &indices {
        let inst = &ds.instances[idx];
        visual.push((inst.id, net_v.project(&inst.visual)?));
        textual.push((inst.id, net_t.project(&inst.textual)?));
        categories.insert(inst.id, inst.category);
    }

    let mut per_category = Vec::new();
    let mut run_direction = |queries: &[(usize, Vector)],
                             gallery: &[(usize, Vector)],
                             direction: Direction|
     -> Result<f64> {
        let mut ap_sum = 0.0;
        let mut cat_sum = vec![0.0; ds.n_categories()];
        let mut cat_count = vec![0usize; ds.n_categories()];
        for (query_id, query) in queries {
            let query_cat = categories[query_id];
            let ranked = rank_gallery(query, gallery)?;
            let relevance: Vec<bool> = ranked.iter().map(|id| categories[id] == query_cat).collect();
            let ap = match at_k {
                Some(k) => average_precision_at_k(&relevance, k),
                None => average_precision(&relevance),
            };
            ap_sum += ap;
            cat_sum[query_cat] += ap;
            cat_count[query_cat] += 1;
        }
        for category in 0..ds.n_categories() {
            if cat_count[category] > 0 {
                per_category.push(CategoryAp {
                    direction,
                    category,
                    ap_mean: cat_sum[category] / cat_count[category] as f64,
                    n_queries: cat_count[category],
                });
            }
        }
        Ok(ap_sum / queries.len() as f64)
    };

    let map_i2t = run_direction(&visual, &textual, Direction::ImageToText)?;
    let map_t2i = run_direction(&textual, &visual, Direction::TextToImage)?;

    Ok(EvalReport {
        map_i2t,
        map_t2i,
        map_avg: (map_i2t + map_t2i) / 2.0,
        per_category,
        query_count: indices.len() * 2,
        at_k,
    })
}
