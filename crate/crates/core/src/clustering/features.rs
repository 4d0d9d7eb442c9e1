use crate::error::{Error, Result};
use crate::ingest::ResampledTrajectory;

/// Feature row of a resampled trajectory:
/// `[x_1..x_l, y_1..y_l, z_1..z_l, (sin h_k, cos h_k) for each segment,
///   r_1..r_l, (sin θ_k, cos θ_k) for each point]`.
///
/// Headings and polar angles are measured counter-clockwise from East.
pub fn augment_features(traj: &ResampledTrajectory) -> Vec<f64> {
    let pts = &traj.points;
    let l = pts.len();
    let mut row = Vec::with_capacity(3 * l + 2 * (l - 1) + 3 * l);
    row.extend(pts.iter().map(|p| p.x));
    row.extend(pts.iter().map(|p| p.y));
    row.extend(pts.iter().map(|p| p.z));
    for w in pts.windows(2) {
        let h = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
        row.push(h.sin());
        row.push(h.cos());
    }
    row.extend(pts.iter().map(|p| p.x.hypot(p.y)));
    for p in pts {
        let theta = p.y.atan2(p.x);
        row.push(theta.sin());
        row.push(theta.cos());
    }
    row
}

/// Column-normalized feature matrix. Zero-variance columns are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    /// Indices of the raw columns that survived.
    pub kept_columns: Vec<usize>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
}

impl FeatureMatrix {
    /// Center and scale every column to unit sample standard deviation.
    pub fn normalize(raw: &[Vec<f64>]) -> Result<Self> {
        let n = raw.len();
        let width = raw.first().map_or(0, Vec::len);
        if raw.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("feature rows have different lengths"));
        }
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for c in 0..width {
            let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let std = var.sqrt();
            if std > 1e-12 * (1.0 + mean.abs()) {
                kept.push(c);
                means.push(mean);
                stds.push(std);
            }
        }
        let rows = raw
            .iter()
            .map(|r| {
                kept.iter()
                    .zip(means.iter().zip(&stds))
                    .map(|(&c, (m, s))| (r[c] - m) / s)
                    .collect()
            })
            .collect();
        Ok(Self {
            rows,
            kept_columns: kept,
            column_means: means,
            column_stds: stds,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.kept_columns.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointEnu;

    fn straight(x0: f64, y0: f64, dx: f64, dy: f64) -> ResampledTrajectory {
        ResampledTrajectory {
            flight_id: "t".into(),
            points: (0..8)
                .map(|k| PointEnu::new(x0 + dx * k as f64, y0 + dy * k as f64, 35000.0))
                .collect(),
            entry_time: 0,
            exit_time: 0,
            ground_speeds: vec![],
        }
    }

    #[test]
    fn due_east_headings() {
        let row = augment_features(&straight(-50.0, 3.0, 10.0, 0.0));
        assert_eq!(row.len(), 24 + 14 + 24);
        for k in 0..7 {
            assert!(row[24 + 2 * k].abs() < 1e-15);
            assert!((row[24 + 2 * k + 1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn track_through_origin_has_zero_radius() {
        let row = augment_features(&straight(-30.0, 0.0, 10.0, 0.0));
        let radii = &row[38..46];
        assert!(radii.iter().any(|r| r.abs() < 1e-12));
    }

    #[test]
    fn parallel_tracks_share_heading_columns() {
        let a = augment_features(&straight(-50.0, 3.0, 10.0, 4.0));
        let b = augment_features(&straight(-50.0, 8.0, 10.0, 4.0));
        assert_eq!(a[24..38], b[24..38]);
        assert_ne!(a[8..16], b[8..16]);
        assert_ne!(a[38..46], b[38..46]);
    }

    #[test]
    fn normalization_gives_unit_columns_and_drops_constants() {
        let raw = vec![
            vec![1.0, 5.0, 2.0],
            vec![2.0, 5.0, 4.0],
            vec![4.0, 5.0, 9.0],
            vec![7.0, 5.0, 1.0],
        ];
        let m = FeatureMatrix::normalize(&raw).unwrap();
        assert_eq!(m.kept_columns, vec![0, 2]);
        for c in 0..m.n_cols() {
            let mean = m.rows.iter().map(|r| r[c]).sum::<f64>() / 4.0;
            let var = m.rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
