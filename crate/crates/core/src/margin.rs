//! The margin machinery: the sigmoid scheduler, the semantic and cluster
//! margin components, their adaptive blend, the scheduled margin that shifts
//! from a static value to the adaptive one as training converges, and the
//! per-epoch trace used for margin analyses.
//!
//! Per triplet at epoch `t` the effective margin is
//!
//! ```text
//! f_m  = α(t) · f_am + (1 − α(t)) · m
//! α(t) = 1 / (1 + exp(−k · (t − f_a · n_e)))
//! f_am = λ · f_ms + (1 − λ) · f_mc
//! ```
//!
//! where `f_ms` averages min–max-normalized original-feature distances over
//! both modalities and `f_mc` averages rescaled cosine distances between the
//! anchor and negative category centroids in the projected space.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DistanceStats, MultimodalInstance, Split};
use crate::error::{Error, Result};
use crate::numerics::{Vector, NORM_EPSILON};
use crate::projection::ProjectionNetwork;

/// How the scheduler gates the adaptive margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Full sigmoid schedule.
    Scheduled,
    /// Margin pinned to the static value `m` (α ≡ 0).
    StaticOnly,
    /// Adaptive margin from the first epoch (α ≡ 1).
    AlwaysAdaptive,
}

/// All margin and scheduler knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginConfig {
    /// Static margin `m`.
    pub static_margin: f64,
    /// Trade-off `λ` between the semantic component (weight `λ`) and the
    /// cluster component (weight `1 − λ`).
    pub semantic_weight: f64,
    /// Sigmoid smoothing `k`.
    pub steepness: f64,
    /// Activation factor `f_a`: the fraction of total epochs at which the
    /// scheduler crosses 0.5.
    pub activation_fraction: f64,
    /// Total epochs `n_e`.
    pub total_epochs: usize,
    pub mode: ScheduleMode,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            static_margin: 1.0,
            semantic_weight: 0.25,
            steepness: 0.1,
            activation_fraction: 0.4,
            total_epochs: 100,
            mode: ScheduleMode::Scheduled,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.static_margin.is_finite() || self.static_margin < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "static margin must be >= 0, got {}",
                self.static_margin
            )));
        }
        if !(0.0..=1.0).contains(&self.semantic_weight) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.semantic_weight
            )));
        }
        if !self.steepness.is_finite() || self.steepness <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "k must be positive, got {}",
                self.steepness
            )));
        }
        if !(0.0..=1.0).contains(&self.activation_fraction) {
            return Err(Error::InvalidConfig(format!(
                "f_a must lie in [0, 1], got {}",
                self.activation_fraction
            )));
        }
        Ok(())
    }

    /// Scheduler value at epoch `t`, respecting the mode override.
    pub fn alpha(&self, t: usize) -> f64 {
        match self.mode {
            ScheduleMode::Scheduled => scheduler_alpha(t, self),
            ScheduleMode::StaticOnly => 0.0,
            ScheduleMode::AlwaysAdaptive => 1.0,
        }
    }
}

/// The raw sigmoid `α(t) = 1 / (1 + e^(−k·(t − f_a·n_e)))`.
pub fn scheduler_alpha(t: usize, cfg: &MarginConfig) -> f64 {
    let midpoint = cfg.activation_fraction * cfg.total_epochs as f64;
    1.0 / (1.0 + (-cfg.steepness * (t as f64 - midpoint)).exp())
}

/// Semantic margin `f_ms`: the mean of the two per-modality normalized
/// original-feature distances between anchor and negative. Each term is
/// clamped into `[0, 1]`, so out-of-training-range distances saturate.
pub fn semantic_margin(
    a: &MultimodalInstance,
    n: &MultimodalInstance,
    stats: &DistanceStats,
) -> f64 {
    debug_assert_eq!(a.visual.dim(), n.visual.dim());
    debug_assert_eq!(a.textual.dim(), n.textual.dim());
    let dist = |u: &Vector, v: &Vector| {
        u.iter()
            .zip(v.iter())
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let dv = stats.visual.normalize(dist(&a.visual, &n.visual));
    let dt = stats.textual.normalize(dist(&a.textual, &n.textual));
    0.5 * (dv + dt)
}

/// Per-category mean projections for one epoch, per modality.
///
/// Centroids are plain means of the unit-norm projections (not re-normalized;
/// the cosine used by [`cluster_margin`] is scale-invariant).
#[derive(Debug, Clone)]
pub struct CentroidTable {
    pub epoch: usize,
    visual: Vec<Vector>,
    textual: Vec<Vector>,
    counts: Vec<usize>,
}

impl CentroidTable {
    /// Builds a table directly from per-category centroids (synthetic
    /// analyses and harnesses; member counts default to 1).
    pub fn from_centroids(epoch: usize, visual: Vec<Vector>, textual: Vec<Vector>) -> Self {
        assert_eq!(visual.len(), textual.len());
        let counts = vec![1; visual.len()];
        CentroidTable {
            epoch,
            visual,
            textual,
            counts,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, category: usize) -> Option<usize> {
        self.counts.get(category).copied()
    }

    pub fn visual(&self, category: usize) -> Result<&Vector> {
        self.visual.get(category).ok_or(Error::UnknownCategory {
            category,
            known: self.counts.len(),
        })
    }

    pub fn textual(&self, category: usize) -> Result<&Vector> {
        self.textual.get(category).ok_or(Error::UnknownCategory {
            category,
            known: self.counts.len(),
        })
    }
}

/// Eval-mode centroids of the projected training split, per category and
/// modality. Dropout never applies here: centroids reflect the deployed
/// projection, not a stochastic mask.
pub fn compute_centroids(
    net_v: &ProjectionNetwork,
    net_t: &ProjectionNetwork,
    ds: &Dataset,
    epoch: usize,
) -> Result<CentroidTable> {
    let n_cats = ds.n_categories();
    let mut visual = vec![Vector::zeros(net_v.out_dim()); n_cats];
    let mut textual = vec![Vector::zeros(net_t.out_dim()); n_cats];
    let mut counts = vec![0usize; n_cats];

    for idx in ds.split_indices(Split::Train) {
        let inst = &ds.instances[idx];
        visual[inst.category].add_scaled(1.0, &net_v.project(&inst.visual)?);
        textual[inst.category].add_scaled(1.0, &net_t.project(&inst.textual)?);
        counts[inst.category] += 1;
    }

    for (category, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyCategory { category });
        }
        let inv = 1.0 / count as f64;
        visual[category].scale(inv);
        textual[category].scale(inv);
    }

    Ok(CentroidTable {
        epoch,
        visual,
        textual,
        counts,
    })
}

/// Cluster margin `f_mc`: the mean over modalities of the cosine distance
/// between the two category centroids, with the cosine rescaled into `[0, 1]`
/// first (`s' = (s + 1) / 2`, `d = 1 − s'`).
pub fn cluster_margin(cat_a: usize, cat_n: usize, table: &CentroidTable) -> Result<f64> {
    if cat_a == cat_n {
        // a category is at distance zero from itself; checking the index
        // avoids returning rounding residue instead of an exact 0
        table.visual(cat_a)?;
        return Ok(0.0);
    }
    let distance = |a: &Vector, b: &Vector| -> Result<f64> {
        let norm_a = a.norm();
        let norm_b = b.norm();
        if norm_a < NORM_EPSILON || norm_b < NORM_EPSILON {
            return Err(Error::DegenerateVector {
                context: "cluster_margin centroid",
                norm: norm_a.min(norm_b),
            });
        }
        let s = (a.dot(b) / (norm_a * norm_b)).clamp(-1.0, 1.0);
        Ok(1.0 - (s + 1.0) / 2.0)
    };
    let dv = distance(table.visual(cat_a)?, table.visual(cat_n)?)?;
    let dt = distance(table.textual(cat_a)?, table.textual(cat_n)?)?;
    Ok(0.5 * (dv + dt))
}

/// Adaptive margin `f_am = λ·f_ms + (1−λ)·f_mc`.
pub fn adaptive_margin(semantic: f64, cluster: f64, cfg: &MarginConfig) -> f64 {
    cfg.semantic_weight * semantic + (1.0 - cfg.semantic_weight) * cluster
}

/// The scheduled margin `f_m = α(t)·f_am + (1−α(t))·m` for one triplet.
///
/// Anchor and negative must come from different categories; a shared category
/// is a triplet-construction bug upstream.
pub fn scheduled_margin(
    a: &MultimodalInstance,
    n: &MultimodalInstance,
    t: usize,
    table: &CentroidTable,
    stats: &DistanceStats,
    cfg: &MarginConfig,
) -> Result<f64> {
    if a.category == n.category {
        return Err(Error::SameCategory {
            category: a.category,
        });
    }
    if cfg.mode == ScheduleMode::StaticOnly {
        return Ok(cfg.static_margin);
    }
    let f_ms = semantic_margin(a, n, stats);
    let f_mc = cluster_margin(a.category, n.category, table)?;
    let f_am = adaptive_margin(f_ms, f_mc, cfg);
    let alpha = cfg.alpha(t);
    Ok(alpha * f_am + (1.0 - alpha) * cfg.static_margin)
}

#[derive(Debug, Clone, Copy, Default)]
struct MeanAcc {
    sum: f64,
    count: u64,
}

impl MeanAcc {
    fn record(&mut self, value: f64) {
        self.sum += value;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, Default)]
struct EpochMargins {
    alpha: f64,
    global: MeanAcc,
    pairs: BTreeMap<(usize, usize), MeanAcc>,
}

/// Running means of the margin imposed per epoch, globally and per ordered
/// (anchor category, negative category) pair. Pairs that never occur are
/// absent from the export.
#[derive(Debug, Clone, Default)]
pub struct MarginTrace {
    epochs: BTreeMap<usize, EpochMargins>,
}

impl MarginTrace {
    pub fn new() -> Self {
        MarginTrace::default()
    }

    /// Registers an epoch and the scheduler value it ran under.
    pub fn begin_epoch(&mut self, epoch: usize, alpha: f64) {
        self.epochs.entry(epoch).or_default().alpha = alpha;
    }

    pub fn record(&mut self, epoch: usize, cat_a: usize, cat_n: usize, value: f64) {
        let entry = self.epochs.entry(epoch).or_default();
        entry.global.record(value);
        entry.pairs.entry((cat_a, cat_n)).or_default().record(value);
    }

    pub fn alpha(&self, epoch: usize) -> Option<f64> {
        self.epochs.get(&epoch).map(|e| e.alpha)
    }

    /// Mean margin over every triplet recorded in `epoch`.
    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        self.epochs.get(&epoch).and_then(|e| e.global.mean())
    }

    pub fn pair_mean(&self, epoch: usize, cat_a: usize, cat_n: usize) -> Option<(f64, u64)> {
        self.epochs
            .get(&epoch)
            .and_then(|e| e.pairs.get(&(cat_a, cat_n)))
            .and_then(|acc| acc.mean().map(|m| (m, acc.count)))
    }

    pub fn epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.epochs.keys().copied()
    }

    /// Writes `margins.csv`: one global row per epoch (`cat_a=cat_b=*`)
    /// followed by the pair rows in ascending category order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch,alpha,cat_a,cat_b,mean_margin,count")?;
        for (epoch, entry) in &self.epochs {
            if let Some(mean) = entry.global.mean() {
                writeln!(
                    w,
                    "{},{},*,*,{},{}",
                    epoch, entry.alpha, mean, entry.global.count
                )?;
            }
            for ((cat_a, cat_n), acc) in &entry.pairs {
                if let Some(mean) = acc.mean() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        epoch, entry.alpha, cat_a, cat_n, mean, acc.count
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DistanceRange;
    use crate::numerics::{l2_normalize, Rng};

    fn cfg(k: f64, f_a: f64, n_e: usize) -> MarginConfig {
        MarginConfig {
            steepness: k,
            activation_fraction: f_a,
            total_epochs: n_e,
            ..MarginConfig::default()
        }
    }

    fn flat_stats() -> DistanceStats {
        DistanceStats {
            visual: DistanceRange {
                min_dist: 0.0,
                max_dist: 1.0,
                degenerate: false,
            },
            textual: DistanceRange {
                min_dist: 0.0,
                max_dist: 1.0,
                degenerate: false,
            },
            sample_pair_count: 1,
        }
    }

    fn inst(id: usize, category: usize, visual: Vec<f64>, textual: Vec<f64>) -> MultimodalInstance {
        MultimodalInstance {
            id,
            visual: Vector::from_vec(visual),
            textual: Vector::from_vec(textual),
            category,
            split: Split::Train,
        }
    }

    fn table_from(visual: Vec<Vector>, textual: Vec<Vector>) -> CentroidTable {
        CentroidTable::from_centroids(0, visual, textual)
    }

    #[test]
    fn alpha_midpoint_is_half() {
        for k in [0.01, 0.1, 1.0] {
            let c = cfg(k, 0.4, 100);
            assert!((scheduler_alpha(40, &c) - 0.5).abs() < 1e-12);
        }
        let c = cfg(0.3, 0.5, 50);
        assert!((scheduler_alpha(25, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alpha_endpoints_match_closed_form() {
        let c = cfg(0.1, 0.4, 100);
        assert!((scheduler_alpha(0, &c) - 1.0 / (1.0 + 4f64.exp())).abs() < 1e-15);
        assert!((scheduler_alpha(100, &c) - 1.0 / (1.0 + (-6f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn alpha_strictly_increasing() {
        // n_e = 50 keeps the sigmoid tail representable even at k = 1; with
        // k·(t − f_a·n_e) beyond ~37 the value saturates to exactly 1.0 in f64
        // and consecutive epochs can no longer be distinguished.
        for k in [0.01, 0.1, 1.0] {
            let c = cfg(k, 0.4, 50);
            let mut prev = scheduler_alpha(0, &c);
            for t in 1..=50 {
                let cur = scheduler_alpha(t, &c);
                assert!(cur > prev, "k={k}, t={t}");
                prev = cur;
            }
        }
    }

    #[test]
    fn mode_overrides_alpha() {
        let mut c = cfg(0.1, 0.4, 100);
        c.mode = ScheduleMode::StaticOnly;
        assert_eq!(c.alpha(40), 0.0);
        c.mode = ScheduleMode::AlwaysAdaptive;
        assert_eq!(c.alpha(0), 1.0);
        c.mode = ScheduleMode::Scheduled;
        assert_eq!(c.alpha(40), 0.5);
    }

    #[test]
    fn semantic_margin_cases() {
        let stats = flat_stats();
        let a = inst(0, 0, vec![0.3, 0.0], vec![0.2]);
        let same = inst(1, 1, vec![0.3, 0.0], vec![0.2]);
        assert_eq!(semantic_margin(&a, &same, &stats), 0.0);

        // normalized visual distance 0.4, textual 0.6 -> 0.5
        let n = inst(2, 1, vec![0.7, 0.0], vec![0.8]);
        assert!((semantic_margin(&a, &n, &stats) - 0.5).abs() < 1e-12);

        // both raw distances beyond the training max clamp to 1
        let far = inst(3, 1, vec![9.0, 0.0], vec![-9.0]);
        assert_eq!(semantic_margin(&a, &far, &stats), 1.0);
    }

    #[test]
    fn centroid_is_arithmetic_mean() {
        use crate::dataset::Dataset;
        use crate::projection::ProjectionNetwork;
        let net_v = ProjectionNetwork::init(3, 6, 4, 0.0, 1).unwrap();
        let net_t = ProjectionNetwork::init(3, 6, 4, 0.0, 2).unwrap();
        let ds = Dataset {
            name: "t".into(),
            categories: vec!["a".into(), "b".into()],
            d_v: 3,
            d_t: 3,
            instances: vec![
                inst(0, 0, vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0]),
                inst(1, 0, vec![0.0, 1.0, 0.0], vec![0.0, 0.5, 0.5]),
                inst(2, 1, vec![0.0, 0.0, 1.0], vec![0.5, 0.0, 0.5]),
            ],
        };
        let table = compute_centroids(&net_v, &net_t, &ds, 1).unwrap();
        let p0 = net_v.project(&ds.instances[0].visual).unwrap();
        let p1 = net_v.project(&ds.instances[1].visual).unwrap();
        let centroid = table.visual(0).unwrap();
        for i in 0..4 {
            assert!((centroid[i] - 0.5 * (p0[i] + p1[i])).abs() < 1e-12);
        }
        // single-member category: centroid equals that projection
        let p2 = net_t.project(&ds.instances[2].textual).unwrap();
        let single = table.textual(1).unwrap();
        for i in 0..4 {
            assert_eq!(single[i], p2[i]);
        }
        // identical inputs give identical tables
        let again = compute_centroids(&net_v, &net_t, &ds, 1).unwrap();
        assert_eq!(table.visual(0).unwrap(), again.visual(0).unwrap());
    }

    #[test]
    fn empty_category_is_reported() {
        use crate::dataset::Dataset;
        let net_v = ProjectionNetwork::init(2, 4, 3, 0.0, 1).unwrap();
        let net_t = ProjectionNetwork::init(2, 4, 3, 0.0, 2).unwrap();
        let ds = Dataset {
            name: "t".into(),
            categories: vec!["a".into(), "b".into()],
            d_v: 2,
            d_t: 2,
            instances: vec![inst(0, 0, vec![1.0, 0.0], vec![0.0, 1.0])],
        };
        assert!(matches!(
            compute_centroids(&net_v, &net_t, &ds, 1),
            Err(Error::EmptyCategory { category: 1 })
        ));
    }

    #[test]
    fn cluster_margin_cases() {
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        let neg = Vector::from_vec(vec![-1.0, 0.0]);

        let same = table_from(vec![e1.clone(), e1.clone()], vec![e2.clone(), e2.clone()]);
        assert_eq!(cluster_margin(0, 1, &same).unwrap(), 0.0);

        let orthogonal = table_from(vec![e1.clone(), e2.clone()], vec![e1.clone(), e2.clone()]);
        assert!((cluster_margin(0, 1, &orthogonal).unwrap() - 0.5).abs() < 1e-12);

        let antipodal = table_from(vec![e1.clone(), neg.clone()], vec![e1.clone(), neg.clone()]);
        assert_eq!(cluster_margin(0, 1, &antipodal).unwrap(), 1.0);

        assert!(matches!(
            cluster_margin(0, 2, &same),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn cluster_margin_is_symmetric() {
        let mut rng = Rng::from_seed(17);
        let rand_vec = |rng: &mut Rng| {
            l2_normalize(&Vector::from_vec(
                (0..4).map(|_| rng.standard_normal()).collect(),
            ))
            .unwrap()
        };
        for _ in 0..100 {
            let table = table_from(
                vec![rand_vec(&mut rng), rand_vec(&mut rng)],
                vec![rand_vec(&mut rng), rand_vec(&mut rng)],
            );
            assert_eq!(
                cluster_margin(0, 1, &table).unwrap(),
                cluster_margin(1, 0, &table).unwrap()
            );
        }
    }

    #[test]
    fn adaptive_margin_blend() {
        let with_lambda = |semantic_weight: f64| MarginConfig {
            semantic_weight,
            ..MarginConfig::default()
        };
        assert_eq!(adaptive_margin(0.4, 0.8, &with_lambda(1.0)), 0.4);
        assert_eq!(adaptive_margin(0.4, 0.8, &with_lambda(0.0)), 0.8);
        assert!((adaptive_margin(0.4, 0.8, &with_lambda(0.25)) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn scheduled_margin_endpoints_and_blend() {
        let stats = flat_stats();
        let a = inst(0, 0, vec![0.0, 0.0], vec![0.0]);
        let n = inst(1, 1, vec![1.0, 0.0], vec![1.0]);
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        let table = table_from(vec![e1.clone(), e2.clone()], vec![e1.clone(), e2.clone()]);

        // f_ms = 1.0, f_mc = 0.5, lambda = 0.25 -> f_am = 0.625
        let mut c = cfg(0.1, 0.4, 100);
        c.mode = ScheduleMode::StaticOnly;
        assert_eq!(
            scheduled_margin(&a, &n, 3, &table, &stats, &c).unwrap(),
            c.static_margin
        );
        c.mode = ScheduleMode::AlwaysAdaptive;
        assert!((scheduled_margin(&a, &n, 3, &table, &stats, &c).unwrap() - 0.625).abs() < 1e-12);
        c.mode = ScheduleMode::Scheduled;
        // alpha = 0.5 at the midpoint: 0.5·0.625 + 0.5·1.0 = 0.8125
        let mid = scheduled_margin(&a, &n, 40, &table, &stats, &c).unwrap();
        assert!((mid - 0.8125).abs() < 1e-12);

        let same = inst(2, 0, vec![1.0, 1.0], vec![0.5]);
        assert!(matches!(
            scheduled_margin(&a, &same, 1, &table, &stats, &c),
            Err(Error::SameCategory { category: 0 })
        ));
    }

    #[test]
    fn scheduled_margin_stays_between_adaptive_and_static() {
        let mut rng = Rng::from_seed(23);
        let stats = flat_stats();
        let rand_unit = |rng: &mut Rng, d: usize| {
            l2_normalize(&Vector::from_vec(
                (0..d).map(|_| rng.standard_normal()).collect(),
            ))
            .unwrap()
        };
        for trial in 0..500 {
            let a = inst(
                0,
                0,
                (0..3).map(|_| rng.uniform(0.0, 1.0)).collect(),
                (0..2).map(|_| rng.uniform(0.0, 1.0)).collect(),
            );
            let n = inst(
                1,
                1,
                (0..3).map(|_| rng.uniform(0.0, 1.0)).collect(),
                (0..2).map(|_| rng.uniform(0.0, 1.0)).collect(),
            );
            let table = table_from(
                vec![rand_unit(&mut rng, 4), rand_unit(&mut rng, 4)],
                vec![rand_unit(&mut rng, 4), rand_unit(&mut rng, 4)],
            );
            let mut c = cfg(0.1, 0.4, 100);
            c.semantic_weight = rng.uniform(0.0, 1.0);
            let t = trial % 101;

            let f_ms = semantic_margin(&a, &n, &stats);
            let f_mc = cluster_margin(0, 1, &table).unwrap();
            let f_am = adaptive_margin(f_ms, f_mc, &c);
            let f_m = scheduled_margin(&a, &n, t, &table, &stats, &c).unwrap();
            assert!((0.0..=1.0).contains(&f_ms));
            assert!((0.0..=1.0).contains(&f_mc));
            assert!((0.0..=1.0).contains(&f_am));
            let lo = f_am.min(c.static_margin) - 1e-12;
            let hi = f_am.max(c.static_margin) + 1e-12;
            assert!(f_m >= lo && f_m <= hi);
            // m = 1.0 dominates f_am, so the schedule can only lower margins
            assert!(f_m >= f_am - 1e-12);
        }
    }

    #[test]
    fn ablation_identity_alpha_one_lambda_one() {
        let stats = flat_stats();
        let mut c = cfg(0.1, 0.4, 100);
        c.mode = ScheduleMode::AlwaysAdaptive;
        c.semantic_weight = 1.0;
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        let table = table_from(vec![e1.clone(), e2.clone()], vec![e1, e2]);
        let mut rng = Rng::from_seed(31);
        for t in 0..50 {
            let a = inst(
                0,
                0,
                (0..3).map(|_| rng.uniform(0.0, 1.0)).collect(),
                (0..2).map(|_| rng.uniform(0.0, 1.0)).collect(),
            );
            let n = inst(
                1,
                1,
                (0..3).map(|_| rng.uniform(0.0, 1.0)).collect(),
                (0..2).map(|_| rng.uniform(0.0, 1.0)).collect(),
            );
            let f_m = scheduled_margin(&a, &n, t, &table, &stats, &c).unwrap();
            assert_eq!(f_m, semantic_margin(&a, &n, &stats));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn feature(dim: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.0f64..2.0, dim)
        }

        proptest! {
            #[test]
            fn scheduled_margin_is_bracketed(
                vis_a in feature(3), txt_a in feature(2),
                vis_n in feature(3), txt_n in feature(2),
                cv_a in feature(4), cv_n in feature(4),
                ct_a in feature(4), ct_n in feature(4),
                lambda in 0.0f64..1.0,
                m in 0.0f64..1.5,
                t in 0usize..100,
            ) {
                let a = inst(0, 0, vis_a, txt_a);
                let n = inst(1, 1, vis_n, txt_n);
                let mk = |v: Vec<f64>| {
                    let mut v = Vector::from_vec(v);
                    v.as_mut_slice()[0] += 0.5; // keeps centroids away from zero
                    v
                };
                let table = table_from(vec![mk(cv_a), mk(cv_n)], vec![mk(ct_a), mk(ct_n)]);
                let cfg = MarginConfig {
                    semantic_weight: lambda,
                    static_margin: m,
                    ..MarginConfig::default()
                };
                let stats = flat_stats();
                let f_ms = semantic_margin(&a, &n, &stats);
                let f_mc = cluster_margin(0, 1, &table).unwrap();
                let f_am = adaptive_margin(f_ms, f_mc, &cfg);
                let f_m = scheduled_margin(&a, &n, t, &table, &stats, &cfg).unwrap();
                prop_assert!((0.0..=1.0).contains(&f_ms));
                prop_assert!((0.0..=1.0).contains(&f_mc));
                prop_assert!((0.0..=1.0).contains(&f_am));
                prop_assert!(f_m >= f_am.min(m) - 1e-12 && f_m <= f_am.max(m) + 1e-12);
            }
        }
    }

    #[test]
    fn trace_running_means() {
        let mut trace = MarginTrace::new();
        trace.begin_epoch(1, 0.25);
        trace.record(1, 0, 1, 0.4);
        trace.record(1, 0, 1, 0.6);
        trace.record(1, 2, 0, 1.0);
        let (mean, count) = trace.pair_mean(1, 0, 1).unwrap();
        assert!((mean - 0.5).abs() < 1e-12);
        assert_eq!(count, 2);
        assert!(trace.pair_mean(1, 1, 0).is_none());

        // global mean is the count-weighted mean of pair means
        let global = trace.epoch_mean(1).unwrap();
        assert!((global - (0.4 + 0.6 + 1.0) / 3.0).abs() < 1e-12);

        let csv = trace.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,alpha,cat_a,cat_b,mean_margin,count");
        assert!(lines.next().unwrap().starts_with("1,0.25,*,*,"));
        assert!(csv.contains("1,0.25,0,1,0.5,2"));
    }
}
