//! Distance of an orbit to a reference polyline.

use nalgebra::DVector;

pub const DEFAULT_TUBE_RADIUS: f64 = 0.15;

/// Distance from `x` to the segment `[a, b]`.
fn segment_distance(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((x - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (x - a - ab * s).norm()
}

/// Distance from `x` to the polyline through `reference`.
pub fn polyline_distance(x: &DVector<f64>, reference: &[DVector<f64>]) -> f64 {
    match reference {
        [] => f64::INFINITY,
        [p] => (x - p).norm(),
        _ => reference.windows(2).map(|w| segment_distance(x, &w[0], &w[1])).fold(f64::INFINITY, f64::min),
    }
}

/// Index of a segment of the polyline through `reference` lying within
/// distance `r` of `x`. The search starts at segment `hint`.
fn nearby_segment(x: &[f64], reference: &[DVector<f64>], lengths: &[f64], r: f64, hint: usize) -> Option<usize> {
    let r2 = r * r;
    let dist2 = |p: &[f64]| x.iter().zip(p).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    if reference.len() == 1 {
        return (dist2(reference[0].as_slice()) < r2).then_some(0);
    }
    let m = lengths.len();
    (0..m).map(|k| (hint + k) % m).find(|&i| {
        let (a, b, len) = (reference[i].as_slice(), reference[i + 1].as_slice(), lengths[i]);
        let reach = r + len;
        if dist2(a) >= reach * reach {
            return false;
        }
        let (mut dot, mut len2) = (0.0, 0.0);
        for k in 0..x.len() {
            let ab = b[k] - a[k];
            dot += (x[k] - a[k]) * ab;
            len2 += ab * ab;
        }
        let s = if len2 > 0.0 { (dot / len2).clamp(0.0, 1.0) } else { 0.0 };
        let d2: f64 = (0..x.len()).map(|k| (x[k] - a[k] - s * (b[k] - a[k])).powi(2)).sum();
        d2 < r2
    })
}

/// Fraction of `samples` lying within distance `r` of the polyline.
pub fn tube_containment(samples: &[DVector<f64>], reference: &[DVector<f64>], r: f64) -> f64 {
    if samples.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lengths: Vec<f64> = reference.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
    let mut hint = 0;
    let mut inside = 0;
    for x in samples {
        if let Some(i) = nearby_segment(x.as_slice(), reference, &lengths, r, hint) {
            hint = i;
            inside += 1;
        }
    }
    inside as f64 / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lv::LotkaVolterraSystem;
    use rand::{Rng, SeedableRng};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn segment_projection_cases() {
        let (a, b) = (v(&[0.0, 0.0]), v(&[1.0, 0.0]));
        assert_eq!(segment_distance(&v(&[0.5, 2.0]), &a, &b), 2.0);
        assert_eq!(segment_distance(&v(&[-3.0, 4.0]), &a, &b), 5.0);
        assert_eq!(segment_distance(&v(&[4.0, 4.0]), &a, &b), 5.0);
        assert_eq!(segment_distance(&v(&[2.0, 0.0]), &a, &a), 2.0);
    }

    #[test]
    fn reference_against_itself() {
        let sys = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let gamma = sys.heteroclinic_reference(1e-3).unwrap();
        assert_eq!(tube_containment(&gamma, &gamma, 1e-9), 1.0);
    }

    #[test]
    fn containment_matches_polyline_distance() {
        let sys = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let gamma = sys.heteroclinic_reference(1e-3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let lengths: Vec<f64> = gamma.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
        for _ in 0..300 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-0.2..1.2));
            let d = polyline_distance(&x, &gamma);
            if (d - 0.15).abs() > 1e-9 {
                assert_eq!(nearby_segment(x.as_slice(), &gamma, &lengths, 0.15, 17).is_some(), d < 0.15);
            }
        }
    }

    #[test]
    fn random_walk_fraction_is_a_fraction() {
        let sys = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let gamma = sys.heteroclinic_reference(1e-3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut x = v(&[0.5, 0.5, 0.5]);
        let walk: Vec<DVector<f64>> = (0..500)
            .map(|_| {
                x += DVector::from_fn(3, |_, _| rng.random_range(-0.02..0.02));
                x.clone()
            })
            .collect();
        let f = tube_containment(&walk, &gamma, 0.15);
        assert!((0.0..=1.0).contains(&f));
        assert_eq!(tube_containment(&walk, &gamma, 10.0), 1.0);
    }
}
