//! DBSCAN with a deterministic visiting order.
//!
//! Points are visited in ascending index order and each cluster is expanded
//! completely before the next seed is considered, so a border point reachable
//! from two clusters belongs to the one seeded first. Neighborhoods include the
//! point itself.

/// Per-point labels: `Some(cluster)` or `None` for noise.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors = neighborhoods(points, eps);
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;

    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        if neighbors[p].len() < min_pts {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        labels[p] = Some(c);
        let mut queue: Vec<usize> = neighbors[p].clone();
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            if labels[q].is_none() {
                labels[q] = Some(c);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            if neighbors[q].len() >= min_pts {
                queue.extend_from_slice(&neighbors[q]);
            }
        }
    }
    labels
}

/// Indices within `eps` of each point, ascending. Candidates are pruned by a
/// sweep over the first coordinate.
fn neighborhoods(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let key = |i: usize| points[i].first().copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let sorted_keys: Vec<f64> = order.iter().map(|&i| key(i)).collect();

    (0..n)
        .map(|i| {
            let k = key(i);
            let start = sorted_keys.partition_point(|&v| v < k - eps);
            let mut out: Vec<usize> = order[start..]
                .iter()
                .zip(&sorted_keys[start..])
                .take_while(|(_, &v)| v <= k + eps)
                .map(|(&j, _)| j)
                .filter(|&j| squared_distance(&points[i], &points[j]) <= eps2)
                .collect();
            out.sort_unstable();
            out
        })
        .collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_blobs() {
        let mut pts = Vec::new();
        for i in 0..12 {
            let t = i as f64 * 0.01;
            pts.push(vec![t, -t]);
            pts.push(vec![10.0 + t, 5.0 + t]);
        }
        let labels = dbscan(&pts, 0.5, 5);
        assert!(labels.iter().all(Option::is_some));
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[1], Some(1));
    }

    #[test]
    fn sparse_points_are_all_noise() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 2.0, 0.0]).collect();
        assert!(dbscan(&pts, 1.0, 3).iter().all(Option::is_none));
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // two dense pairs bridged by one border point at the origin
        let pts = vec![
            vec![-1.0, 0.0],
            vec![-1.1, 0.0],
            vec![-1.2, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.1, 0.0],
            vec![1.2, 0.0],
        ];
        let labels = dbscan(&pts, 1.0, 4);
        assert_eq!(labels[3], Some(0));
        assert_eq!(labels[4], Some(1));
    }
}
