//! Descriptor correspondence, robust affine estimation and focus transfer.

pub mod affine;
pub mod kdtree;
pub mod ransac;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Descriptor;
use crate::imaging::Point2;

pub use affine::{estimate_affine, fit_affine_least_squares, transfer_focus, AffineMap};
pub use kdtree::{build_index, DescriptorIndex, Neighbor};
pub use ransac::{ransac_affine, AffineFit, RansacParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pov_index: usize,
    pub ref_index: usize,
    pub descriptor_distance: f64,
}

/// Successful vision match: the consensus affine map, its inliers and the
/// transferred focus.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub affine: AffineMap,
    pub inlier_indices: Vec<usize>,
    pub f_ref: Point2,
}

impl MatchResult {
    pub fn from_fit(fit: AffineFit, f_pov: Point2) -> Self {
        Self {
            f_ref: transfer_focus(&fit.affine, f_pov),
            affine: fit.affine,
            inlier_indices: fit.inlier_indices,
        }
    }
}

/// Nearest-neighbor matching with the ratio test: a query keeps its
/// nearest reference descriptor iff `d1 < ratio * d2`. Degenerate queries
/// are skipped.
pub fn match_descriptors(
    index: &DescriptorIndex,
    queries: &[Descriptor],
    ratio: f64,
) -> Result<Vec<Correspondence>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!("ratio must be in (0, 1], got {ratio}")));
    }
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        if q.degenerate {
            continue;
        }
        let (first, second) = index.nearest_two(&q.values);
        let keep = match second {
            None => true,
            Some(s) => first.distance() < ratio * s.distance(),
        };
        if keep {
            out.push(Correspondence {
                pov_index: qi,
                ref_index: first.index,
                descriptor_distance: first.distance(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DESCRIPTOR_LEN;
    use rand::{Rng, SeedableRng};

    fn unit(rng: &mut impl Rng) -> [f32; DESCRIPTOR_LEN] {
        let mut v = [0.0f32; DESCRIPTOR_LEN];
        v.iter_mut().for_each(|x| *x = rng.random::<f32>());
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    #[test]
    fn ratio_one_keeps_every_distinct_query() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let refs: Vec<_> = (0..20).map(|_| Descriptor::from_values(unit(&mut rng))).collect();
        let queries: Vec<_> = (0..15).map(|_| Descriptor::from_values(unit(&mut rng))).collect();
        let index = build_index(&refs).unwrap();
        assert_eq!(match_descriptors(&index, &queries, 1.0).unwrap().len(), 15);
    }

    #[test]
    fn equidistant_query_rejected() {
        let mut a = [0.0f32; DESCRIPTOR_LEN];
        let mut b = [0.0f32; DESCRIPTOR_LEN];
        a[0] = 1.0;
        b[1] = 1.0;
        let mut q = [0.0f32; DESCRIPTOR_LEN];
        q[0] = 0.5;
        q[1] = 0.5;
        let index = build_index(&[Descriptor::from_values(a), Descriptor::from_values(b)]).unwrap();
        let query = [Descriptor::from_values(q)];
        assert!(match_descriptors(&index, &query, 0.99).unwrap().is_empty());
    }

    #[test]
    fn planted_pairs_survive_ratio_test() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut refs = Vec::new();
        let mut queries = Vec::new();
        let mut planted = Vec::new();
        for i in 0..10 {
            // query q; its true partner at distance 0.1, a distractor at 0.2
            let q = unit(&mut rng);
            let dir = unit(&mut rng);
            let shifted = |s: f32| -> [f32; DESCRIPTOR_LEN] { std::array::from_fn(|k| q[k] + s * dir[k]) };
            planted.push((i, refs.len()));
            refs.push(Descriptor::from_values(shifted(0.1)));
            refs.push(Descriptor::from_values(shifted(-0.2)));
            queries.push(Descriptor::from_values(q));
        }
        let index = build_index(&refs).unwrap();
        let got: Vec<(usize, usize)> = match_descriptors(&index, &queries, 0.8)
            .unwrap()
            .iter()
            .map(|c| (c.pov_index, c.ref_index))
            .collect();
        assert_eq!(got, planted);
    }

    #[test]
    fn invalid_ratio_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let index = build_index(&[Descriptor::from_values(unit(&mut rng))]).unwrap();
        assert!(match_descriptors(&index, &[], 0.0).is_err());
        assert!(match_descriptors(&index, &[], 1.5).is_err());
    }
}
