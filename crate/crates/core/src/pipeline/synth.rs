//! Complementary Gaussian blobs: each view draws some cluster pairs from a
//! shared Gaussian, so the view cannot tell them apart, while every pair is
//! distinct in at least one view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// Cluster pairs merged in each view.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPlan {
    pub merges: Vec<Vec<(usize, usize)>>,
}

impl ConfusionPlan {
    pub fn none(views: usize) -> Self {
        Self {
            merges: vec![Vec::new(); views],
        }
    }

    /// View `v` merges clusters `v mod K` and `(v+1) mod K` when there are
    /// several views and at least three clusters; otherwise nothing is merged.
    pub fn chain(views: usize, clusters: usize) -> Self {
        if views < 2 || clusters < 3 {
            return Self::none(views);
        }
        Self {
            merges: (0..views)
                .map(|v| vec![(v % clusters, (v + 1) % clusters)])
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub views: usize,
    pub clusters: usize,
    pub n_per_cluster: usize,
    pub dim: usize,
    /// Standard deviation of the cluster-centre coordinates.
    pub separation: f64,
    /// Within-cluster standard deviation.
    pub noise: f64,
}

impl SyntheticConfig {
    pub fn new(views: usize, clusters: usize, n_per_cluster: usize) -> Self {
        Self {
            views,
            clusters,
            n_per_cluster,
            dim: 8,
            separation: 6.0,
            noise: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub views: Vec<Matrix>,
    pub labels: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Per-view representative cluster for every cluster.
fn merge_groups(plan: &ConfusionPlan, clusters: usize) -> Result<Vec<Vec<usize>>> {
    plan.merges
        .iter()
        .map(|pairs| {
            let mut parent: Vec<usize> = (0..clusters).collect();
            for &(a, b) in pairs {
                if a >= clusters || b >= clusters {
                    return Err(Error::InvalidArgument(format!(
                        "merge ({a}, {b}) names a cluster outside 0..{clusters}"
                    )));
                }
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
            Ok((0..clusters).map(|j| find(&mut parent, j)).collect())
        })
        .collect()
}

pub fn make_synthetic(
    config: &SyntheticConfig,
    plan: &ConfusionPlan,
    rng: &mut RngState,
) -> Result<SyntheticData> {
    let (v, k) = (config.views, config.clusters);
    if v == 0 || k == 0 || config.n_per_cluster == 0 || config.dim == 0 {
        return Err(Error::InvalidArgument(
            "views, clusters, samples per cluster and dim must all be positive".into(),
        ));
    }
    if !(config.separation > 0.0 && config.noise >= 0.0) {
        return Err(Error::InvalidArgument(
            "separation must be > 0 and noise >= 0".into(),
        ));
    }
    if plan.merges.len() != v {
        return Err(Error::InvalidArgument(format!(
            "confusion plan covers {} views, expected {v}",
            plan.merges.len()
        )));
    }
    let groups = merge_groups(plan, k)?;
    for a in 0..k {
        for b in a + 1..k {
            if groups.iter().all(|g| g[a] == g[b]) {
                return Err(Error::InvalidArgument(format!(
                    "clusters {a} and {b} are merged in every view"
                )));
            }
        }
    }
    let n = k * config.n_per_cluster;
    let labels: Vec<usize> = (0..n).map(|i| i / config.n_per_cluster).collect();
    let views = groups
        .iter()
        .map(|group| {
            let centres = Matrix::from_fn(k, config.dim, |_, _| config.separation * rng.normal());
            Matrix::from_fn(n, config.dim, |i, c| {
                centres[(group[labels[i]], c)] + config.noise * rng.normal()
            })
        })
        .collect();
    Ok(SyntheticData { views, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_plan_shapes() {
        assert_eq!(ConfusionPlan::chain(1, 4), ConfusionPlan::none(1));
        assert_eq!(ConfusionPlan::chain(3, 2), ConfusionPlan::none(3));
        assert_eq!(
            ConfusionPlan::chain(3, 4).merges,
            vec![vec![(0, 1)], vec![(1, 2)], vec![(2, 3)]]
        );
    }

    #[test]
    fn infeasible_plan_rejected() {
        let plan = ConfusionPlan {
            merges: vec![vec![(0, 1)], vec![(1, 0)]],
        };
        let cfg = SyntheticConfig::new(2, 3, 5);
        assert!(make_synthetic(&cfg, &plan, &mut RngState::new(0)).is_err());
        let plan = ConfusionPlan {
            merges: vec![vec![(0, 7)]],
        };
        assert!(
            make_synthetic(&SyntheticConfig::new(1, 3, 5), &plan, &mut RngState::new(0)).is_err()
        );
    }

    #[test]
    fn merged_clusters_share_a_centre() {
        let mut cfg = SyntheticConfig::new(2, 3, 200);
        cfg.noise = 0.5;
        let plan = ConfusionPlan {
            merges: vec![vec![(0, 1)], vec![]],
        };
        let data = make_synthetic(&cfg, &plan, &mut RngState::new(1)).unwrap();
        assert_eq!(data.labels.len(), 600);
        let mean = |view: &Matrix, j: usize| {
            let idx: Vec<usize> = (0..600).filter(|&i| data.labels[i] == j).collect();
            view.select_rows(&idx).column_means()
        };
        let d0 = mean(&data.views[0], 0)
            .sub(&mean(&data.views[0], 1))
            .unwrap()
            .max_abs();
        let d1 = mean(&data.views[1], 0)
            .sub(&mean(&data.views[1], 1))
            .unwrap()
            .max_abs();
        assert!(d0 < 0.2, "merged means differ by {d0}");
        assert!(d1 > 0.5);
    }
}
