//! Paired multimodal feature datasets: loading, saving, synthesis, splits,
//! and the training-set distance statistics that normalize the semantic
//! margin.
//!
//! On-disk layout of a dataset directory:
//!
//! ```text
//! manifest.json   name, d_v, d_t, categories, count, files
//! visual.f32      raw little-endian IEEE-754 float32, row-major,
//!                 instance i at byte offset i * d_v * 4
//! textual.f32     same encoding with d_t
//! labels.csv      header "id,category,split", one row per instance
//! ```
//!
//! Features are float32 on disk and widened to float64 in memory; the
//! synthetic generator rounds to float32 on emit so that save/load is a
//! bit-exact round trip.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{euclidean_dist, l2_normalize, Rng, Vector};

/// Default cap on the number of training pairs sampled for distance stats.
pub const DEFAULT_MAX_STAT_PAIRS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One paired (visual, textual, category) record.
#[derive(Debug, Clone)]
pub struct MultimodalInstance {
    pub id: usize,
    pub visual: Vector,
    pub textual: Vector,
    pub category: usize,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub categories: Vec<String>,
    pub d_v: usize,
    pub d_t: usize,
    pub instances: Vec<MultimodalInstance>,
}

impl Dataset {
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    /// Positions (not ids) of the instances assigned to `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_v == 0 || self.d_t == 0 {
            return Err(Error::InvalidConfig(
                "feature dimensions must be positive".into(),
            ));
        }
        let mut ids = HashSet::with_capacity(self.instances.len());
        for (index, inst) in self.instances.iter().enumerate() {
            if inst.visual.dim() != self.d_v {
                return Err(Error::DimensionMismatch {
                    context: "instance visual features",
                    left: inst.visual.dim(),
                    right: self.d_v,
                });
            }
            if inst.textual.dim() != self.d_t {
                return Err(Error::DimensionMismatch {
                    context: "instance textual features",
                    left: inst.textual.dim(),
                    right: self.d_t,
                });
            }
            if inst.category >= self.categories.len() {
                return Err(Error::Label(format!(
                    "instance {} references category {} but only {} categories are listed",
                    inst.id,
                    inst.category,
                    self.categories.len()
                )));
            }
            if !ids.insert(inst.id) {
                return Err(Error::Label(format!("duplicate instance id {}", inst.id)));
            }
            for (component, x) in inst.visual.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFiniteFeature {
                        index,
                        modality: "visual",
                        component,
                    });
                }
            }
            for (component, x) in inst.textual.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFiniteFeature {
                        index,
                        modality: "textual",
                        component,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    d_v: usize,
    d_t: usize,
    categories: Vec<String>,
    count: usize,
    files: ManifestFiles,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFiles {
    visual: String,
    textual: String,
    labels: String,
}

fn read_feature_file(path: &Path, count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (count as u64) * (dim as u64) * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * dim * 4;
        let row: Vec<f64> = bytes[start..start + dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn write_feature_file(path: &Path, rows: impl Iterator<Item = impl AsRef<[f64]>>) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        for &x in row.as_ref() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads and validates a dataset directory (the directory containing
/// `manifest.json`).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    if manifest.d_v == 0 || manifest.d_t == 0 {
        return Err(Error::manifest(
            &manifest_path,
            "d_v and d_t must be positive",
        ));
    }
    if manifest.categories.is_empty() {
        return Err(Error::manifest(&manifest_path, "categories list is empty"));
    }

    let visual = read_feature_file(&dir.join(&manifest.files.visual), manifest.count, manifest.d_v)?;
    let textual =
        read_feature_file(&dir.join(&manifest.files.textual), manifest.count, manifest.d_t)?;

    let labels_path = dir.join(&manifest.files.labels);
    let labels_raw = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut lines = labels_raw.lines();
    match lines.next() {
        Some("id,category,split") => {}
        _ => {
            return Err(Error::manifest(
                &labels_path,
                "labels file must start with header 'id,category,split'",
            ))
        }
    }

    let mut instances = Vec::with_capacity(manifest.count);
    for (row_index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (id, category, split) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(id), Some(cat), Some(split), None) => (id, cat, split),
            _ => {
                return Err(Error::manifest(
                    &labels_path,
                    format!("row {}: expected 3 fields", row_index + 1),
                ))
            }
        };
        let id: usize = id.parse().map_err(|_| {
            Error::manifest(&labels_path, format!("row {}: bad id '{id}'", row_index + 1))
        })?;
        let category: usize = category.parse().map_err(|_| {
            Error::manifest(
                &labels_path,
                format!("row {}: bad category '{category}'", row_index + 1),
            )
        })?;
        if category >= manifest.categories.len() {
            return Err(Error::Label(format!(
                "instance {} references category {} but valid range is 0..{}",
                id,
                category,
                manifest.categories.len()
            )));
        }
        let split = Split::parse(split).ok_or_else(|| {
            Error::manifest(
                &labels_path,
                format!("row {}: bad split '{split}'", row_index + 1),
            )
        })?;
        let row = instances.len();
        if row >= manifest.count {
            return Err(Error::manifest(
                &labels_path,
                format!("more label rows than manifest count {}", manifest.count),
            ));
        }
        instances.push(MultimodalInstance {
            id,
            visual: Vector::from_vec(visual[row].clone()),
            textual: Vector::from_vec(textual[row].clone()),
            category,
            split,
        });
    }
    if instances.len() != manifest.count {
        return Err(Error::manifest(
            &labels_path,
            format!(
                "label rows ({}) do not match manifest count ({})",
                instances.len(),
                manifest.count
            ),
        ));
    }

    let ds = Dataset {
        name: manifest.name,
        categories: manifest.categories,
        d_v: manifest.d_v,
        d_t: manifest.d_t,
        instances,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes a dataset directory in the interchange format.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        name: ds.name.clone(),
        d_v: ds.d_v,
        d_t: ds.d_t,
        categories: ds.categories.clone(),
        count: ds.instances.len(),
        files: ManifestFiles {
            visual: "visual.f32".into(),
            textual: "textual.f32".into(),
            labels: "labels.csv".into(),
        },
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    write_feature_file(
        &dir.join("visual.f32"),
        ds.instances.iter().map(|i| i.visual.as_slice()),
    )?;
    write_feature_file(
        &dir.join("textual.f32"),
        ds.instances.iter().map(|i| i.textual.as_slice()),
    )?;

    let labels_path = dir.join("labels.csv");
    let mut out = Vec::new();
    writeln!(out, "id,category,split").expect("write to Vec");
    for inst in &ds.instances {
        writeln!(out, "{},{},{}", inst.id, inst.category, inst.split.as_str()).expect("write to Vec");
    }
    fs::write(&labels_path, out).map_err(|e| Error::io(&labels_path, e))
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n_categories: usize,
    pub per_category: usize,
    pub d_v: usize,
    pub d_t: usize,
    /// Standard deviation of the isotropic Gaussian noise around each
    /// category mean.
    pub intra_spread: f64,
    /// Scale of the (unit-direction) category means; larger values pull the
    /// categories further apart.
    pub inter_sep: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_categories == 0 || self.per_category == 0 || self.d_v == 0 || self.d_t == 0 {
            return Err(Error::InvalidConfig(
                "synthetic counts and dimensions must be positive".into(),
            ));
        }
        if !self.inter_sep.is_finite() || self.inter_sep <= 0.0 {
            return Err(Error::InvalidConfig("inter_sep must be positive".into()));
        }
        if !self.intra_spread.is_finite() || self.intra_spread < 0.0 {
            return Err(Error::InvalidConfig(
                "intra_spread must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn random_direction(dim: usize, rng: &mut Rng) -> Vector {
    loop {
        let v = Vector::from_vec((0..dim).map(|_| rng.standard_normal()).collect());
        if let Ok(unit) = l2_normalize(&v) {
            return unit;
        }
    }
}

/// Generates a category-balanced synthetic dataset with a stratified
/// 70/10/20 train/validation/test split. Deterministic for a fixed seed;
/// features are rounded to float32 so the on-disk round trip is exact.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = Rng::from_seed(cfg.seed);

    let mut visual_means = Vec::with_capacity(cfg.n_categories);
    let mut textual_means = Vec::with_capacity(cfg.n_categories);
    for _ in 0..cfg.n_categories {
        let mut v = random_direction(cfg.d_v, &mut rng);
        v.scale(cfg.inter_sep);
        visual_means.push(v);
        let mut t = random_direction(cfg.d_t, &mut rng);
        t.scale(cfg.inter_sep);
        textual_means.push(t);
    }

    let n = cfg.per_category;
    let n_train = n * 7 / 10;
    let n_val = n / 10;

    let mut instances = Vec::with_capacity(cfg.n_categories * n);
    let mut id = 0;
    for cat in 0..cfg.n_categories {
        for j in 0..n {
            let sample = |mean: &Vector, rng: &mut Rng| {
                Vector::from_vec(
                    mean.iter()
                        .map(|&m| {
                            let x = m + cfg.intra_spread * rng.standard_normal();
                            (x as f32) as f64
                        })
                        .collect(),
                )
            };
            let visual = sample(&visual_means[cat], &mut rng);
            let textual = sample(&textual_means[cat], &mut rng);
            let split = if j < n_train {
                Split::Train
            } else if j < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            instances.push(MultimodalInstance {
                id,
                visual,
                textual,
                category: cat,
                split,
            });
            id += 1;
        }
    }

    Ok(Dataset {
        name: format!("synthetic-{}x{}", cfg.n_categories, cfg.per_category),
        categories: (0..cfg.n_categories).map(|c| format!("cat{c:02}")).collect(),
        d_v: cfg.d_v,
        d_t: cfg.d_t,
        instances,
    })
}

/// Min/max of the sampled training distances for one modality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceRange {
    pub min_dist: f64,
    pub max_dist: f64,
    /// Set when every sampled pair sat at the same distance and the range was
    /// widened to `[min, min + 1]`.
    pub degenerate: bool,
}

impl DistanceRange {
    /// Min–max rescaling into `[0, 1]`, clamped; pairs outside the training
    /// range saturate rather than escape the interval.
    pub fn normalize(&self, d: f64) -> f64 {
        ((d - self.min_dist) / (self.max_dist - self.min_dist)).clamp(0.0, 1.0)
    }
}

/// Per-modality training-distance statistics backing the semantic margin
/// normalizer. Visual (CNN) and textual (BoW) feature scales differ by orders
/// of magnitude, so each modality gets its own range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceStats {
    pub visual: DistanceRange,
    pub textual: DistanceRange,
    pub sample_pair_count: usize,
}

impl DistanceStats {
    pub fn is_degenerate(&self) -> bool {
        self.visual.degenerate || self.textual.degenerate
    }
}

/// Samples up to `max_pairs` unordered training pairs (exhaustive when the
/// cap covers them all, in which case the seed is irrelevant) and records the
/// per-modality min/max Euclidean distance.
pub fn compute_distance_stats(ds: &Dataset, max_pairs: usize, seed: u64) -> Result<DistanceStats> {
    let train = ds.split_indices(Split::Train);
    let n = train.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "distance stats need at least 2 training instances, found {n}"
        )));
    }
    if max_pairs == 0 {
        return Err(Error::InvalidConfig("max_pairs must be positive".into()));
    }

    let total_pairs = n * (n - 1) / 2;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if total_pairs <= max_pairs {
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((train[i], train[j]));
            }
        }
    } else {
        let mut rng = Rng::from_seed(seed);
        let mut seen = HashSet::with_capacity(max_pairs);
        while pairs.len() < max_pairs {
            let a = rng.below(n);
            let b = rng.below(n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                pairs.push((train[key.0], train[key.1]));
            }
        }
    }

    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for &(i, j) in &pairs {
        let dv = euclidean_dist(&ds.instances[i].visual, &ds.instances[j].visual)?;
        let dt = euclidean_dist(&ds.instances[i].textual, &ds.instances[j].textual)?;
        v_min = v_min.min(dv);
        v_max = v_max.max(dv);
        t_min = t_min.min(dt);
        t_max = t_max.max(dt);
    }

    let widen = |min: f64, max: f64| {
        if max > min {
            DistanceRange {
                min_dist: min,
                max_dist: max,
                degenerate: false,
            }
        } else {
            DistanceRange {
                min_dist: min,
                max_dist: min + 1.0,
                degenerate: true,
            }
        }
    };

    Ok(DistanceStats {
        visual: widen(v_min, v_max),
        textual: widen(t_min, t_max),
        sample_pair_count: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n_categories: 4,
            per_category: 20,
            d_v: 6,
            d_t: 5,
            intra_spread: 0.1,
            inter_sep: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn synthetic_split_arithmetic() {
        let cfg = SyntheticConfig {
            n_categories: 10,
            per_category: 200,
            d_v: 8,
            d_t: 8,
            ..small_cfg()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.instances.len(), 2000);
        assert_eq!(ds.split_indices(Split::Train).len(), 1400);
        assert_eq!(ds.split_indices(Split::Validation).len(), 200);
        assert_eq!(ds.split_indices(Split::Test).len(), 400);
    }

    #[test]
    fn synthetic_split_is_partition() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let total = ds.split_indices(Split::Train).len()
            + ds.split_indices(Split::Validation).len()
            + ds.split_indices(Split::Test).len();
        assert_eq!(total, ds.instances.len());
    }

    #[test]
    fn synthetic_zero_spread_collapses_categories() {
        let cfg = SyntheticConfig {
            intra_spread: 0.0,
            ..small_cfg()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let first = &ds.instances[0];
        for inst in ds.instances.iter().filter(|i| i.category == 0) {
            assert_eq!(inst.visual, first.visual);
            assert_eq!(inst.textual, first.textual);
        }
    }

    #[test]
    fn synthetic_is_deterministic_on_disk() {
        let a = generate_synthetic(&small_cfg()).unwrap();
        let b = generate_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a");
        let pb = dir.path().join("b");
        save_dataset(&a, &pa).unwrap();
        save_dataset(&b, &pb).unwrap();
        for file in ["manifest.json", "visual.f32", "textual.f32", "labels.csv"] {
            assert_eq!(
                fs::read(pa.join(file)).unwrap(),
                fs::read(pb.join(file)).unwrap(),
                "{file} differs"
            );
        }
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        let cfg = SyntheticConfig {
            inter_sep: 0.0,
            ..small_cfg()
        };
        assert!(matches!(
            generate_synthetic(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.categories, ds.categories);
        assert_eq!(loaded.instances.len(), ds.instances.len());
        for (a, b) in ds.instances.iter().zip(loaded.instances.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.category, b.category);
            assert_eq!(a.split, b.split);
            assert_eq!(a.visual, b.visual);
            assert_eq!(a.textual, b.textual);
        }
    }

    #[test]
    fn truncated_feature_file_is_shape_error() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let visual = dir.path().join("visual.f32");
        let bytes = fs::read(&visual).unwrap();
        fs::write(&visual, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::FileShape { .. })
        ));
    }

    #[test]
    fn out_of_range_category_is_label_error() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let labels = dir.path().join("labels.csv");
        let text = fs::read_to_string(&labels).unwrap();
        // first data row gets a category index equal to the category count
        let patched: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                if i == 1 {
                    let mut fields: Vec<&str> = line.split(',').collect();
                    fields[1] = "4";
                    fields.join(",")
                } else {
                    line.to_string()
                }
            })
            .collect();
        fs::write(&labels, patched.join("\n") + "\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Label(_))));
    }

    #[test]
    fn stats_identical_features_degenerate() {
        let cfg = SyntheticConfig {
            n_categories: 1,
            intra_spread: 0.0,
            ..small_cfg()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let stats = compute_distance_stats(&ds, 1000, 1).unwrap();
        assert!(stats.is_degenerate());
        assert_eq!(stats.visual.min_dist, 0.0);
        assert_eq!(stats.visual.max_dist, 1.0);
        assert_eq!(stats.textual.min_dist, 0.0);
        assert_eq!(stats.textual.max_dist, 1.0);
    }

    #[test]
    fn stats_single_pair_widens() {
        // Two training instances at visual distance 5: a lone pair makes
        // min == max, which widens to [5, 6].
        let mk = |id, x: f64, split| MultimodalInstance {
            id,
            visual: Vector::from_vec(vec![x, 0.0]),
            textual: Vector::from_vec(vec![x]),
            category: 0,
            split,
        };
        let ds = Dataset {
            name: "pair".into(),
            categories: vec!["only".into()],
            d_v: 2,
            d_t: 1,
            instances: vec![mk(0, 0.0, Split::Train), mk(1, 5.0, Split::Train)],
        };
        let stats = compute_distance_stats(&ds, 10, 0).unwrap();
        assert_eq!(stats.sample_pair_count, 1);
        assert_eq!(stats.visual.min_dist, 5.0);
        assert_eq!(stats.visual.max_dist, 6.0);
        assert!(stats.visual.degenerate);
    }

    #[test]
    fn stats_exhaustive_is_seed_independent() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let n = ds.split_indices(Split::Train).len();
        let all = n * (n - 1) / 2;
        let a = compute_distance_stats(&ds, all, 1).unwrap();
        let b = compute_distance_stats(&ds, all, 999).unwrap();
        assert_eq!(a.sample_pair_count, all);
        assert_eq!(a.visual.min_dist, b.visual.min_dist);
        assert_eq!(a.visual.max_dist, b.visual.max_dist);
        assert_eq!(a.textual.min_dist, b.textual.min_dist);
        assert_eq!(a.textual.max_dist, b.textual.max_dist);
    }

    #[test]
    fn stats_insufficient_data() {
        let cfg = SyntheticConfig {
            n_categories: 1,
            per_category: 1,
            ..small_cfg()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert!(ds.split_indices(Split::Train).len() < 2);
        assert!(matches!(
            compute_distance_stats(&ds, 100, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn normalized_distances_stay_in_unit_interval() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let stats = compute_distance_stats(&ds, 500, 3).unwrap();
        let train = ds.split_indices(Split::Train);
        for w in train.windows(2) {
            let d = euclidean_dist(&ds.instances[w[0]].visual, &ds.instances[w[1]].visual).unwrap();
            let nd = stats.visual.normalize(d);
            assert!((0.0..=1.0).contains(&nd));
        }
    }

    #[test]
    fn separable_synthetic_classifies_by_nearest_centroid() {
        // sep/spread ratio of 10 must give >= 99% nearest-centroid accuracy
        // on raw features; downstream acceptance tests lean on this floor.
        let cfg = SyntheticConfig {
            n_categories: 10,
            per_category: 50,
            d_v: 16,
            d_t: 16,
            intra_spread: 0.1,
            inter_sep: 1.0,
            seed: 5,
        };
        let ds = generate_synthetic(&cfg).unwrap();
        fn feature(i: &MultimodalInstance, modality: usize) -> &Vector {
            if modality == 0 {
                &i.visual
            } else {
                &i.textual
            }
        }
        for modality in [0, 1] {
            let dim = if modality == 0 { ds.d_v } else { ds.d_t };
            let mut centroids = vec![Vector::zeros(dim); ds.n_categories()];
            let mut counts = vec![0usize; ds.n_categories()];
            for inst in &ds.instances {
                centroids[inst.category].add_scaled(1.0, feature(inst, modality));
                counts[inst.category] += 1;
            }
            for (c, count) in centroids.iter_mut().zip(&counts) {
                c.scale(1.0 / *count as f64);
            }
            let mut correct = 0;
            for inst in &ds.instances {
                let nearest = (0..ds.n_categories())
                    .min_by(|&a, &b| {
                        let da = euclidean_dist(feature(inst, modality), &centroids[a]).unwrap();
                        let db = euclidean_dist(feature(inst, modality), &centroids[b]).unwrap();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                if nearest == inst.category {
                    correct += 1;
                }
            }
            let accuracy = correct as f64 / ds.instances.len() as f64;
            assert!(accuracy >= 0.99, "modality {modality}: accuracy {accuracy}");
        }
    }
}
