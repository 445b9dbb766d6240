//! Seeded RANSAC over three-point affine hypotheses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Point2;

use super::affine::{estimate_affine, fit_affine_least_squares, AffineMap};
use super::Correspondence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier residual bound in reference pixels.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
    /// Enumerate every triple instead of sampling when there are at most
    /// [`EXHAUSTIVE_LIMIT`] correspondences.
    pub exhaustive: bool,
}

/// Largest correspondence count handled by exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 12;

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 3.0,
            min_inliers: 8,
            seed: 0x5EED,
            exhaustive: false,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Parameter("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Parameter("ransac inlier_threshold must be > 0".into()));
        }
        if self.min_inliers < 3 {
            return Err(Error::Parameter("ransac min_inliers must be >= 3".into()));
        }
        Ok(())
    }
}

/// Consensus model and its inliers (indices into the correspondence list).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub affine: AffineMap,
    pub inlier_indices: Vec<usize>,
    /// Inlier count of the best sampled hypothesis, before the refit.
    pub consensus: usize,
}

fn inliers_of(model: &AffineMap, pairs: &[(Point2, Point2)], threshold: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, (p, q))| model.residual(*p, *q) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn count_inliers(model: &AffineMap, pairs: &[(Point2, Point2)], threshold: f64) -> usize {
    pairs
        .iter()
        .filter(|(p, q)| model.residual(*p, *q) <= threshold)
        .count()
}

/// Every 3-subset of `0..n` in lexicographic order.
pub fn all_triples(n: usize) -> impl Iterator<Item = [usize; 3]> {
    (0..n).flat_map(move |i| (i + 1..n).flat_map(move |j| (j + 1..n).map(move |k| [i, j, k])))
}

pub fn ransac_affine(
    correspondences: &[Correspondence],
    pov_points: &[Point2],
    ref_points: &[Point2],
    params: &RansacParams,
) -> Result<AffineFit> {
    params.validate()?;
    let pairs: Vec<(Point2, Point2)> = correspondences
        .iter()
        .map(|c| (pov_points[c.pov_index], ref_points[c.ref_index]))
        .collect();
    ransac_on_pairs(&pairs, params)
}

pub fn ransac_on_pairs(pairs: &[(Point2, Point2)], params: &RansacParams) -> Result<AffineFit> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientMatches { found: n, needed: 3 });
    }
    let threshold = params.inlier_threshold;
    let mut best: Option<(AffineMap, usize)> = None;
    let mut consider = |triple: [usize; 3]| {
        let pov = triple.map(|i| pairs[i].0);
        let reference = triple.map(|i| pairs[i].1);
        let Ok(model) = estimate_affine(pov, reference) else {
            return;
        };
        let count = count_inliers(&model, pairs, threshold);
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((model, count));
        }
    };
    if params.exhaustive && n <= EXHAUSTIVE_LIMIT {
        all_triples(n).for_each(&mut consider);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.iterations {
            let s = rand::seq::index::sample(&mut rng, n, 3);
            consider([s.index(0), s.index(1), s.index(2)]);
        }
    }
    let Some((model, consensus)) = best else {
        return Err(Error::NoConsensus {
            best: 0,
            needed: params.min_inliers,
        });
    };
    let sampled_inliers = inliers_of(&model, pairs, threshold);
    let mut fit = AffineFit {
        affine: model,
        inlier_indices: sampled_inliers,
        consensus,
    };
    let support: Vec<(Point2, Point2)> = fit.inlier_indices.iter().map(|&i| pairs[i]).collect();
    if let Ok(refit) = fit_affine_least_squares(&support) {
        let refit_inliers = inliers_of(&refit, pairs, threshold);
        if refit.is_valid() && refit_inliers.len() >= consensus {
            fit.affine = refit;
            fit.inlier_indices = refit_inliers;
        }
    }
    if fit.inlier_indices.len() < params.min_inliers {
        return Err(Error::NoConsensus {
            best: fit.inlier_indices.len(),
            needed: params.min_inliers,
        });
    }
    Ok(fit)
}

/// Debug dump of correspondences: `pov_idx ref_idx dist inlier`.
pub fn format_correspondences(correspondences: &[Correspondence], inliers: &[usize]) -> String {
    let mut s = String::new();
    for (i, c) in correspondences.iter().enumerate() {
        let inlier = inliers.binary_search(&i).is_ok();
        s.push_str(&format!(
            "{} {} {:.6} {}\n",
            c.pov_index,
            c.ref_index,
            c.descriptor_distance,
            u8::from(inlier)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn identity_correspondences(n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|i| Correspondence {
                pov_index: i,
                ref_index: i,
                descriptor_distance: 0.0,
            })
            .collect()
    }

    fn scatter(n: usize, rng: &mut impl Rng) -> Vec<Point2> {
        (0..n)
            .map(|_| p(rng.random_range(0.0..200.0), rng.random_range(0.0..150.0)))
            .collect()
    }

    #[test]
    fn recovers_noiseless_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = AffineMap::new(0.9, 0.1, 30.0, -0.05, 1.1, 12.0);
        let pov = scatter(10, &mut rng);
        let reference: Vec<_> = pov.iter().map(|&q| truth.apply(q)).collect();
        let params = RansacParams { min_inliers: 3, ..Default::default() };
        let fit = ransac_affine(&identity_correspondences(10), &pov, &reference, &params).unwrap();
        assert_eq!(fit.inlier_indices, (0..10).collect::<Vec<_>>());
        for (got, want) in fit.affine.m.iter().flatten().zip(truth.m.iter().flatten()) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn excludes_planted_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = AffineMap::similarity(1.2, 0.2, 5.0, -8.0);
        let pov = scatter(12, &mut rng);
        let mut reference: Vec<_> = pov.iter().map(|&q| truth.apply(q)).collect();
        for r in reference.iter_mut().skip(8) {
            r.x += 50.0;
        }
        let params = RansacParams { min_inliers: 3, inlier_threshold: 3.0, ..Default::default() };
        let fit = ransac_affine(&identity_correspondences(12), &pov, &reference, &params).unwrap();
        assert_eq!(fit.inlier_indices, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn inlier_soundness_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = AffineMap::similarity(0.8, -0.3, 40.0, 10.0);
        let pov = scatter(60, &mut rng);
        let reference: Vec<_> = pov
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let t = truth.apply(q);
                if i % 3 == 0 {
                    p(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0))
                } else {
                    p(t.x + rng.random_range(-1.0..1.0), t.y + rng.random_range(-1.0..1.0))
                }
            })
            .collect();
        let params = RansacParams { inlier_threshold: 2.0, ..Default::default() };
        let corr = identity_correspondences(60);
        let fit = ransac_affine(&corr, &pov, &reference, &params).unwrap();
        for i in 0..60 {
            let r = fit.affine.residual(pov[i], reference[i]);
            assert_eq!(fit.inlier_indices.contains(&i), r <= params.inlier_threshold);
        }
        assert_eq!(fit, ransac_affine(&corr, &pov, &reference, &params).unwrap());
    }

    #[test]
    fn error_paths() {
        let params = RansacParams::default();
        let pts = vec![p(0.0, 0.0), p(1.0, 0.0)];
        assert!(matches!(
            ransac_affine(&identity_correspondences(2), &pts, &pts, &params),
            Err(Error::InsufficientMatches { found: 2, .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pov = scatter(20, &mut rng);
        let reference = scatter(20, &mut rng);
        assert!(matches!(
            ransac_affine(&identity_correspondences(20), &pov, &reference, &params),
            Err(Error::NoConsensus { .. })
        ));
    }

    #[test]
    fn exhaustive_mode_finds_triple_maximum() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = rng.random_range(4..=12);
            let pov = scatter(n, &mut rng);
            let reference = scatter(n, &mut rng);
            let pairs: Vec<_> = pov.iter().copied().zip(reference.iter().copied()).collect();
            let params = RansacParams { exhaustive: true, min_inliers: 3, inlier_threshold: 20.0, ..Default::default() };
            let oracle = all_triples(n)
                .filter_map(|t| estimate_affine(t.map(|i| pov[i]), t.map(|i| reference[i])).ok())
                .map(|m| count_inliers(&m, &pairs, params.inlier_threshold))
                .max()
                .unwrap();
            let fit = ransac_on_pairs(&pairs, &params).unwrap();
            assert_eq!(fit.consensus, oracle);
            assert!(fit.inlier_indices.len() >= oracle);
        }
    }

    #[test]
    fn correspondence_dump() {
        let text = format_correspondences(&identity_correspondences(3), &[0, 2]);
        assert_eq!(text, "0 0 0.000000 1\n1 1 0.000000 0\n2 2 0.000000 1\n");
    }
}
