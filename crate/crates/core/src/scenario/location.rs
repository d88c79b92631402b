use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::region::Region;

/// When patch locations are redrawn during optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocationSchedule {
    pub every: Option<usize>,
    pub until: Option<usize>,
}

impl LocationSchedule {
    /// True at steps where fresh locations are drawn. Step 0 always draws.
    pub fn due(&self, step: usize) -> bool {
        if step == 0 {
            return true;
        }
        match self.every {
            None => false,
            Some(r) => step % r == 0 && self.until.is_none_or(|u| step <= u),
        }
    }
}

const ATTEMPTS: usize = 64;

/// Disjoint in-bounds regions of size `height x width`, one per patch, with
/// corners on a `grid`-pixel lattice.
pub fn randomize_patch_location(
    count: usize,
    size: [usize; 2],
    image: [usize; 2],
    grid: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Region>> {
    let [height, width] = size;
    let [ih, iw] = image;
    let fail = || Error::Placement {
        count,
        height,
        width,
        image_height: ih,
        image_width: iw,
    };
    if height == 0 || width == 0 || height > ih || width > iw || grid == 0 {
        return Err(fail());
    }
    let candidates: Vec<Region> = (0..=ih - height)
        .step_by(grid)
        .flat_map(|r| (0..=iw - width).step_by(grid).map(move |c| Region::new(r, c, height, width)))
        .collect();
    for _ in 0..ATTEMPTS {
        let mut placed: Vec<Region> = Vec::with_capacity(count);
        for _ in 0..count {
            let free: Vec<&Region> = candidates.iter().filter(|c| placed.iter().all(|p| !p.overlaps(c))).collect();
            if free.is_empty() {
                break;
            }
            placed.push(*free[rng.random_range(0..free.len())]);
        }
        if placed.len() == count {
            return Ok(placed);
        }
    }
    Err(fail())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::pairwise_disjoint;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn ten_thousand_draws_disjoint_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let regions = randomize_patch_location(2, [8, 8], [32, 32], 4, &mut rng).unwrap();
            assert!(pairwise_disjoint(&regions));
            assert!(regions.iter().all(|r| r.fits(32, 32) && r.row % 4 == 0 && r.col % 4 == 0));
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            assert_eq!(
                randomize_patch_location(2, [8, 8], [32, 32], 4, &mut a).unwrap(),
                randomize_patch_location(2, [8, 8], [32, 32], 4, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn infinite_period_never_relocates() {
        let s = LocationSchedule { every: None, until: None };
        assert!(s.due(0));
        assert!((1..5000).all(|t| !s.due(t)));
        let s = LocationSchedule {
            every: Some(25),
            until: Some(100),
        };
        let due: Vec<usize> = (0..300).filter(|&t| s.due(t)).collect();
        assert_eq!(due, vec![0, 25, 50, 75, 100]);
    }

    #[test]
    fn impossible_placement_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            randomize_patch_location(2, [20, 20], [32, 32], 4, &mut rng),
            Err(Error::Placement { count: 2, .. })
        ));
        assert!(randomize_patch_location(1, [40, 8], [32, 32], 4, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn random_geometries_place_disjointly(seed in any::<u64>(), count in 1usize..4, h in 1usize..12, w in 1usize..12, grid in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Ok(regions) = randomize_patch_location(count, [h, w], [32, 32], grid, &mut rng) {
                prop_assert_eq!(regions.len(), count);
                prop_assert!(pairwise_disjoint(&regions));
                prop_assert!(regions.iter().all(|r| r.fits(32, 32)));
            }
        }
    }
}
