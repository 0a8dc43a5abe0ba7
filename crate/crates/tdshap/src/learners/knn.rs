//! k-nearest-neighbour prediction by Euclidean distance.

use crate::dataset::TaskKind;
use crate::float::Float;

/// Stored points are in ascending-id order, so distance ties resolve to the
/// lowest id deterministically.
pub(crate) fn predict<F: Float>(
    points: &[(Vec<F>, F)],
    k: usize,
    task: TaskKind,
    n_classes: usize,
    x: &[F],
) -> F {
    let mut order: Vec<(F, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (squared_distance(p, x), i))
        .collect();
    order.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let take = k.min(points.len());
    match task {
        TaskKind::Regression => {
            let sum: F = order[..take].iter().map(|&(_, i)| points[i].1).sum();
            sum / F::from_count(take as u64)
        }
        TaskKind::Classification => {
            let mut counts = vec![0usize; n_classes.max(1)];
            for &(_, i) in &order[..take] {
                counts[points[i].1.as_f64() as usize] += 1;
            }
            let mut best = 0;
            for (c, &cnt) in counts.iter().enumerate() {
                if cnt > counts[best] {
                    best = c;
                }
            }
            F::from_count(best as u64)
        }
    }
}

fn squared_distance<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, d| acc + d)
}
