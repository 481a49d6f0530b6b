//! Local outlier factor over Euclidean distances.
//!
//! For a point `p` with k-distance `kdist(p)` (distance to its k-th nearest
//! other point) the k-neighbourhood `N(p)` holds every other point within
//! `kdist(p)`, ties included. Then
//!
//! ```text
//! reach(p, o) = max(kdist(o), d(p, o))
//! lrd(p)      = 1 / mean_{o in N(p)} reach(p, o)
//! lof(p)      = mean_{o in N(p)} lrd(o) / lrd(p)
//! ```
//!
//! Pairwise distances are floored at [`DISTANCE_FLOOR`] so duplicates never
//! produce an infinite density.

use crate::par::Parallelism;

use super::VerifierError;

pub const DISTANCE_FLOOR: f64 = 1e-12;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn lof_scores(points: &[Vec<f64>], k: usize, par: Parallelism) -> Result<Vec<f64>, VerifierError> {
    let n = points.len();
    if n < 2 {
        return Err(VerifierError::TooFewPoints(n));
    }
    if k == 0 {
        return Err(VerifierError::InvalidK);
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(VerifierError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let k = k.min(n - 1);

    // Row i holds distances from i; the diagonal is +inf.
    let dist: Vec<Vec<f64>> = par.map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    f64::INFINITY
                } else {
                    euclidean(&points[i], &points[j]).max(DISTANCE_FLOOR)
                }
            })
            .collect()
    });

    let neighbourhoods: Vec<(f64, Vec<usize>)> = par.map_range(n, |i| {
        let row = &dist[i];
        let mut sorted: Vec<f64> = row.iter().copied().filter(|d| d.is_finite()).collect();
        sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        let kdist = sorted[k - 1];
        let members = (0..n).filter(|&j| j != i && row[j] <= kdist).collect();
        (kdist, members)
    });

    let lrd: Vec<f64> = par.map_range(n, |i| {
        let (_, members) = &neighbourhoods[i];
        let total: f64 = members
            .iter()
            .map(|&o| neighbourhoods[o].0.max(dist[i][o]))
            .sum();
        members.len() as f64 / total
    });

    Ok(par.map_range(n, |i| {
        let (_, members) = &neighbourhoods[i];
        let sum: f64 = members.iter().map(|&o| lrd[o]).sum();
        sum / (members.len() as f64 * lrd[i])
    }))
}
