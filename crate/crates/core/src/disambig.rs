//! Author disambiguation: DBSCAN over abstract embeddings decides whether a
//! name belongs to one physical person.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; zero vectors are at distance 1 from everything else.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 && bb == 0.0 {
                    0.0
                } else if aa == 0.0 || bb == 0.0 {
                    1.0
                } else {
                    (1.0 - ab / (aa.sqrt() * bb.sqrt())).max(0.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    #[serde(default)]
    pub metric: Metric,
}

/// Selected by `tune` on the bundled synthetic calibration set with the
/// native encoder.
pub const DEFAULT_EPS: f64 = 0.65;
pub const DEFAULT_MIN_PTS: usize = 2;

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            min_pts: DEFAULT_MIN_PTS,
            metric: Metric::Euclidean,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps", "must be positive and finite"));
        }
        if self.min_pts == 0 {
            return Err(Error::config("min_pts", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per point, numbered by first occurrence; `NOISE` otherwise.
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub n_noise: usize,
}

/// Density-based clustering.
///
/// A point's neighbourhood includes itself and every point at distance
/// `<= eps`; core points have at least `min_pts` neighbours. Core points
/// within `eps` of each other share a cluster. A non-core point within `eps`
/// of a core point joins the cluster of its nearest core neighbour, ties
/// going to the lexicographically smallest coordinates, which makes the
/// result independent of input order.
pub fn dbscan(points: &[Vec<f64>], params: &DbscanParams) -> Result<Clustering> {
    params.validate()?;
    if let Some(first) = points.first() {
        let dim = first.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::config("embedding", "vectors differ in dimension"));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite embedding entry".into()));
        }
    }
    let n = points.len();
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| params.metric.distance(&points[i], &points[j])).collect())
        .collect();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i][j] <= params.eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    for start in 0..n {
        if !core[start] || component[start] != usize::MAX {
            continue;
        }
        component[start] = n_components;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && component[q] == usize::MAX {
                    component[q] = n_components;
                    queue.push_back(q);
                }
            }
        }
        n_components += 1;
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let nearest = neighbours[i].iter().copied().filter(|&j| core[j]).min_by(|&a, &b| {
            dist[i][a]
                .partial_cmp(&dist[i][b])
                .unwrap_or(Ordering::Equal)
                .then_with(|| lexicographic(&points[a], &points[b]))
        });
        if let Some(j) = nearest {
            component[i] = component[j];
        }
    }

    let mut remap = vec![NOISE; n_components];
    let mut next = 0;
    let labels: Vec<i32> = component
        .iter()
        .map(|&c| {
            if c == usize::MAX {
                return NOISE;
            }
            if remap[c] == NOISE {
                remap[c] = next;
                next += 1;
            }
            remap[c]
        })
        .collect();
    let n_noise = labels.iter().filter(|&&l| l == NOISE).count();
    Ok(Clustering {
        labels,
        n_clusters: next as usize,
        n_noise,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub n_clusters: usize,
    pub n_noise: usize,
    pub unique_person: bool,
}

/// One cluster plus noise means one person. With fewer than `min_pts`
/// abstracts there is no evidence for a split and the name is kept.
pub fn verdict(abstracts: &[Vec<f64>], params: &DbscanParams) -> Result<ClusterVerdict> {
    params.validate()?;
    if abstracts.len() < params.min_pts {
        return Ok(ClusterVerdict {
            n_clusters: 0,
            n_noise: abstracts.len(),
            unique_person: true,
        });
    }
    let c = dbscan(abstracts, params)?;
    Ok(ClusterVerdict {
        n_clusters: c.n_clusters,
        n_noise: c.n_noise,
        unique_person: c.n_clusters <= 1,
    })
}

/// An author's abstract embeddings with the known answer.
#[derive(Debug, Clone)]
pub struct CalibrationAuthor {
    pub name: String,
    pub abstracts: Vec<Vec<f64>>,
    pub unique_person: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub params: DbscanParams,
    pub correct: usize,
    pub total: usize,
}

pub fn eps_grid() -> Vec<f64> {
    (1..=40).map(|i| i as f64 * 0.05).collect()
}

pub fn min_pts_grid() -> Vec<usize> {
    (2..=8).collect()
}

/// Grid search for the parameters classifying the most calibration authors
/// correctly. Ties go to the smallest `min_pts`, then the midpoint of the
/// widest run of best-scoring `eps` values.
pub fn tune(
    authors: &[CalibrationAuthor],
    eps_grid: &[f64],
    min_pts_grid: &[usize],
    metric: Metric,
) -> Result<TuneResult> {
    if eps_grid.is_empty() || min_pts_grid.is_empty() {
        return Err(Error::config("grid", "empty tuning grid"));
    }
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for &min_pts in min_pts_grid {
        let mut scores = Vec::with_capacity(eps_grid.len());
        for &eps in eps_grid {
            let params = DbscanParams { eps, min_pts, metric };
            let mut correct = 0;
            for a in authors {
                if verdict(&a.abstracts, &params)?.unique_person == a.unique_person {
                    correct += 1;
                }
            }
            scores.push(correct);
        }
        let top = *scores.iter().max().unwrap();
        let (mut run_start, mut run_len, mut best_start, mut best_len) = (0, 0, 0, 0);
        for (i, &s) in scores.iter().enumerate() {
            if s == top {
                if run_len == 0 {
                    run_start = i;
                }
                run_len += 1;
                if run_len > best_len {
                    best_start = run_start;
                    best_len = run_len;
                }
            } else {
                run_len = 0;
            }
        }
        let eps = eps_grid[best_start + (best_len - 1) / 2];
        let better = match best {
            None => true,
            Some((c, len, _, _)) => top > c || (top == c && best_len > len),
        };
        if better {
            best = Some((top, best_len, min_pts, eps));
        }
    }
    let (correct, _, min_pts, eps) = best.unwrap();
    Ok(TuneResult {
        params: DbscanParams { eps, min_pts, metric },
        correct,
        total: authors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64, min_pts: usize) -> DbscanParams {
        DbscanParams {
            eps,
            min_pts,
            metric: Metric::Euclidean,
        }
    }

    fn blob(cx: f64, cy: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                vec![cx + 0.1 * a.cos(), cy + 0.1 * a.sin()]
            })
            .collect()
    }

    #[test]
    fn two_blobs() {
        let mut pts = blob(0.0, 0.0, 10);
        pts.extend(blob(5.0, 5.0, 10));
        let c = dbscan(&pts, &params(0.5, 3)).unwrap();
        assert_eq!((c.n_clusters, c.n_noise), (2, 0));
        assert!(c.labels[..10].iter().all(|&l| l == 0));
        assert!(c.labels[10..].iter().all(|&l| l == 1));
    }

    #[test]
    fn identical_points() {
        let pts = vec![vec![1.0, 2.0]; 6];
        let c = dbscan(&pts, &params(0.1, 6)).unwrap();
        assert_eq!((c.n_clusters, c.n_noise), (1, 0));
    }

    #[test]
    fn single_point() {
        let c = dbscan(&[vec![0.0]], &params(1.0, 2)).unwrap();
        assert_eq!((c.n_clusters, c.n_noise, c.labels), (0, 1, vec![NOISE]));
        let c = dbscan(&[vec![0.0]], &params(1.0, 1)).unwrap();
        assert_eq!(c.n_clusters, 1);
    }

    #[test]
    fn border_goes_to_nearest_core() {
        let line = |xs: &[f64]| xs.iter().map(|&x| vec![x, 0.0]).collect::<Vec<_>>();
        let mut pts = line(&[0.0, -0.1, -0.2, -0.3, 3.0, 3.3, 3.6, 3.9]);
        pts.push(vec![1.55, 0.0]);
        let c = dbscan(&pts, &params(1.6, 4)).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 1]);
        // equidistant border: the core with smaller coordinates wins
        pts[8] = vec![1.5, 0.0];
        let c = dbscan(&pts, &params(1.55, 4)).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 0]);
        let c = dbscan(&pts, &params(0.05, 2)).unwrap();
        assert_eq!((c.n_clusters, c.n_noise), (0, 9));
    }

    #[test]
    fn verdicts() {
        let mut two = blob(0.0, 0.0, 8);
        two.extend(blob(4.0, 0.0, 8));
        assert!(!verdict(&two, &params(0.5, 3)).unwrap().unique_person);
        let mut one = blob(0.0, 0.0, 9);
        one.push(vec![10.0, 10.0]);
        let v = verdict(&one, &params(0.5, 3)).unwrap();
        assert_eq!((v.n_clusters, v.n_noise, v.unique_person), (1, 1, true));
        let v = verdict(&[vec![0.0, 0.0]], &params(0.5, 3)).unwrap();
        assert_eq!((v.n_clusters, v.unique_person), (0, true));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(dbscan(&[vec![0.0]], &params(0.0, 2)).is_err());
        assert!(dbscan(&[vec![0.0]], &params(1.0, 0)).is_err());
        assert!(dbscan(&[vec![0.0], vec![0.0, 1.0]], &params(1.0, 1)).is_err());
        assert!(matches!(
            dbscan(&[vec![f64::NAN]], &params(1.0, 1)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn cosine_distance() {
        let m = Metric::Cosine;
        assert!(m.distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-12);
        assert!((m.distance(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-12);
        assert_eq!(m.distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn tune_finds_separating_eps() {
        let mut authors = Vec::new();
        for k in 0..4 {
            let mut two = blob(0.0, 0.0, 6);
            two.extend(blob(3.0 + k as f64, 0.0, 6));
            authors.push(CalibrationAuthor {
                name: format!("a{k}"),
                abstracts: two,
                unique_person: false,
            });
            authors.push(CalibrationAuthor {
                name: format!("u{k}"),
                abstracts: blob(k as f64, 0.0, 12),
                unique_person: true,
            });
        }
        let r = tune(&authors, &eps_grid(), &[3], Metric::Euclidean).unwrap();
        assert_eq!(r.correct, 8);
        assert!(r.params.eps >= 0.2 && r.params.eps < 2.8, "{:?}", r.params);
    }
}
