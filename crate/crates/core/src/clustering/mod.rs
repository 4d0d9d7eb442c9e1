//! Trajectory clustering: split by attitude and flight level, then run
//! feature augmentation, normalization, PCA and a two-pass DBSCAN per
//! category.

mod dbscan;
mod features;
mod pca;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ResampledTrajectory;

pub use dbscan::dbscan;
pub use features::{augment_features, FeatureMatrix};
pub use pca::{covariance, jacobi_eigen, pca_project, Pca};

/// Net altitude change (ft) that separates level flight from climbs and descents.
pub const ATTITUDE_THRESHOLD_FT: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attitude {
    Level,
    Ascending,
    Descending,
}

/// Attitude plus reference flight level (hundreds of feet, multiple of 10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryKey {
    pub attitude: Attitude,
    pub flight_level: u32,
}

impl fmt::Display for CategoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.attitude {
            Attitude::Level => "level",
            Attitude::Ascending => "ascending",
            Attitude::Descending => "descending",
        };
        write!(f, "{a}-FL{:03}", self.flight_level)
    }
}

impl FromStr for CategoryKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, fl) = s
            .split_once("-FL")
            .ok_or_else(|| Error::invalid(format!("bad category `{s}`")))?;
        let attitude = match a {
            "level" => Attitude::Level,
            "ascending" => Attitude::Ascending,
            "descending" => Attitude::Descending,
            _ => return Err(Error::invalid(format!("bad attitude `{a}`"))),
        };
        let flight_level = fl
            .parse()
            .map_err(|_| Error::invalid(format!("bad flight level `{fl}`")))?;
        Ok(Self { attitude, flight_level })
    }
}

fn round_to_fl(alt_ft: f64) -> u32 {
    ((alt_ft / 1000.0).round().max(0.0) as u32) * 10
}

/// Level flights use their median altitude, climbs their final altitude and
/// descents their initial altitude, rounded to the nearest 1000 ft.
pub fn categorize(traj: &ResampledTrajectory) -> CategoryKey {
    let first = traj.points.first().map_or(0.0, |p| p.z);
    let last = traj.points.last().map_or(0.0, |p| p.z);
    let delta = last - first;
    let (attitude, reference) = if delta >= ATTITUDE_THRESHOLD_FT {
        (Attitude::Ascending, last)
    } else if delta <= -ATTITUDE_THRESHOLD_FT {
        (Attitude::Descending, first)
    } else {
        let mut z: Vec<f64> = traj.points.iter().map(|p| p.z).collect();
        z.sort_by(f64::total_cmp);
        let mid = z.len() / 2;
        let median = if z.len() % 2 == 0 { 0.5 * (z[mid - 1] + z[mid]) } else { z[mid] };
        (Attitude::Level, median)
    };
    CategoryKey {
        attitude,
        flight_level: round_to_fl(reference),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
    pub second_pass_size_threshold: usize,
    pub second_pass_eps: f64,
    pub n_components: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            min_pts: 10,
            second_pass_size_threshold: 200,
            second_pass_eps: 0.3,
            n_components: 5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts < 2 || !(self.second_pass_eps > 0.0 && self.second_pass_eps < self.eps) {
            return Err(Error::invalid(format!(
                "cluster parameters need eps > 0, min_pts >= 2 and 0 < second_pass_eps < eps; got {self:?}"
            )));
        }
        if self.n_components == 0 {
            return Err(Error::invalid("n_components must be positive"));
        }
        Ok(())
    }
}

/// Cluster assignment of a set of trajectories; `None` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    pub labels: Vec<Option<usize>>,
    pub cluster_sizes: Vec<usize>,
}

impl ClusterLabeling {
    /// Renumber clusters by their smallest member index and recount sizes.
    pub fn from_labels(labels: Vec<Option<usize>>) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let labels: Vec<Option<usize>> = labels
            .into_iter()
            .map(|l| {
                l.map(|c| {
                    let next = remap.len();
                    *remap.entry(c).or_insert(next)
                })
            })
            .collect();
        let mut cluster_sizes = vec![0; remap.len()];
        for c in labels.iter().flatten() {
            cluster_sizes[*c] += 1;
        }
        Self { labels, cluster_sizes }
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == Some(cluster)).collect()
    }
}

/// Normalize → PCA → DBSCAN on one set of feature rows.
fn single_pass(rows: &[Vec<f64>], eps: f64, params: &ClusterParams) -> Result<Vec<Option<usize>>> {
    if rows.len() < params.min_pts.max(params.n_components) {
        return Ok(vec![None; rows.len()]);
    }
    let m = FeatureMatrix::normalize(rows)?;
    let pca = pca_project(&m, params.n_components)?;
    Ok(dbscan(&pca.projections, eps, params.min_pts))
}

/// Cluster trajectories that share one category.
///
/// Clusters larger than `second_pass_size_threshold` are re-normalized,
/// re-projected and re-clustered on their own members with
/// `second_pass_eps`. Clusters smaller than `min_pts` become outliers.
pub fn cluster_category(trajs: &[ResampledTrajectory], params: &ClusterParams) -> Result<ClusterLabeling> {
    params.validate()?;
    let rows: Vec<Vec<f64>> = trajs.iter().map(augment_features).collect();
    let first = ClusterLabeling::from_labels(single_pass(&rows, params.eps, params)?);

    let mut labels: Vec<Option<usize>> = vec![None; trajs.len()];
    let mut next = 0;
    for c in 0..first.n_clusters() {
        let members = first.members(c);
        let sub = if members.len() > params.second_pass_size_threshold {
            let sub_rows: Vec<Vec<f64>> = members.iter().map(|&i| rows[i].clone()).collect();
            let sub = ClusterLabeling::from_labels(single_pass(&sub_rows, params.second_pass_eps, params)?);
            // a second pass that dissolves the cluster entirely keeps the first-pass result
            (sub.n_clusters() > 0).then_some(sub)
        } else {
            None
        };
        match sub {
            Some(sub) => {
                for (&i, l) in members.iter().zip(&sub.labels) {
                    labels[i] = l.map(|s| next + s);
                }
                next += sub.n_clusters();
            }
            None => {
                for &i in &members {
                    labels[i] = Some(next);
                }
                next += 1;
            }
        }
    }

    let provisional = ClusterLabeling::from_labels(labels);
    let pruned = provisional
        .labels
        .iter()
        .map(|l| l.filter(|&c| provisional.cluster_sizes[c] >= params.min_pts))
        .collect();
    Ok(ClusterLabeling::from_labels(pruned))
}

/// Labeling of a whole corpus: categories are clustered independently and
/// cluster ids are numbered globally in category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLabeling {
    pub categories: Vec<CategoryKey>,
    pub labeling: ClusterLabeling,
    /// Category of each global cluster id.
    pub cluster_categories: Vec<CategoryKey>,
}

pub fn cluster_corpus(trajs: &[ResampledTrajectory], params: &ClusterParams) -> Result<CorpusLabeling> {
    params.validate()?;
    let categories: Vec<CategoryKey> = trajs.iter().map(categorize).collect();
    let mut groups: BTreeMap<CategoryKey, Vec<usize>> = BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        groups.entry(*c).or_default().push(i);
    }
    let groups: Vec<(CategoryKey, Vec<usize>)> = groups.into_iter().collect();
    let per_group: Vec<ClusterLabeling> = groups
        .par_iter()
        .map(|(_, idx)| {
            let members: Vec<ResampledTrajectory> = idx.iter().map(|&i| trajs[i].clone()).collect();
            cluster_category(&members, params)
        })
        .collect::<Result<_>>()?;

    let mut labels = vec![None; trajs.len()];
    let mut cluster_categories = Vec::new();
    for ((key, idx), lab) in groups.iter().zip(&per_group) {
        let base = cluster_categories.len();
        for (&i, l) in idx.iter().zip(&lab.labels) {
            labels[i] = l.map(|c| base + c);
        }
        cluster_categories.extend(std::iter::repeat_n(*key, lab.n_clusters()));
    }
    let cluster_sizes = {
        let mut s = vec![0; cluster_categories.len()];
        for c in labels.iter().flatten() {
            s[*c] += 1;
        }
        s
    };
    Ok(CorpusLabeling {
        categories,
        labeling: ClusterLabeling { labels, cluster_sizes },
        cluster_categories,
    })
}

/// Adjusted Rand index between two labelings. Outliers (`None`) form one class.
pub fn adjusted_rand_index(a: &[Option<usize>], b: &[Option<usize>]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: HashMap<(Option<usize>, Option<usize>), u64> = HashMap::new();
    let mut rows: HashMap<Option<usize>, u64> = HashMap::new();
    let mut cols: HashMap<Option<usize>, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((*x, *y)).or_default() += 1;
        *rows.entry(*x).or_default() += 1;
        *cols.entry(*y).or_default() += 1;
    }
    let c2 = |k: u64| (k * k.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&k| c2(k)).sum();
    let sa: f64 = rows.values().map(|&k| c2(k)).sum();
    let sb: f64 = cols.values().map(|&k| c2(k)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Labeling export: `flight_id,category,cluster_id` with `-1` for outliers.
pub fn labeling_to_csv(trajs: &[ResampledTrajectory], corpus: &CorpusLabeling) -> String {
    let mut out = String::from("flight_id,category,cluster_id\n");
    for ((t, cat), l) in trajs.iter().zip(&corpus.categories).zip(&corpus.labeling.labels) {
        let id = l.map_or(-1, |c| c as i64);
        out.push_str(&format!("{},{},{}\n", t.flight_id, cat, id));
    }
    out
}

/// Parse a labeling export into `flight_id → cluster` (outliers map to `None`).
pub fn labeling_from_csv(text: &str) -> Result<Vec<(String, CategoryKey, Option<usize>)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "flight_id,category,cluster_id" => {}
        other => return Err(Error::Format(format!("bad labeling header {other:?}"))),
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 3 {
                return Err(Error::Format(format!("bad labeling line `{l}`")));
            }
            let id: i64 = f[2].parse().map_err(|_| Error::Format(format!("bad cluster id in `{l}`")))?;
            Ok((f[0].to_owned(), f[1].parse()?, (id >= 0).then_some(id as usize)))
        })
        .collect()
}
