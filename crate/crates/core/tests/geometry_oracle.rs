//! Interval-set algebra and circle-map images against a bitmask over the
//! grid of cells of width 1/64.

use noacim::geometry::{Interval, IntervalSet};
use noacim::maps::CircleMap;
use noacim::scalar::{self, q};
use proptest::prelude::*;

const G: i64 = 64;

fn cells() -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(any::<bool>(), G as usize)
}

/// Maximal runs of marked cells as a set.
fn from_mask(mask: &[bool]) -> IntervalSet {
    let g = mask.len() as i64;
    let mut parts = Vec::new();
    let mut c = 0;
    while c < mask.len() {
        if mask[c] {
            let start = c;
            while c < mask.len() && mask[c] {
                c += 1;
            }
            parts.push(Interval::new(q(start as i64, g), q(c as i64, g)));
        } else {
            c += 1;
        }
    }
    IntervalSet::from_intervals(parts)
}

fn to_mask(s: &IntervalSet, g: i64) -> Vec<bool> {
    (0..g).map(|c| s.contains_point(&q(2 * c + 1, 2 * g))).collect()
}

/// The set as shuffled, overlapping pieces, to exercise merging.
fn scrambled(mask: &[bool], cut: usize) -> IntervalSet {
    let a = from_mask(mask);
    let mut parts: Vec<Interval> = a.parts().to_vec();
    parts.reverse();
    for p in a.parts().iter().take(cut) {
        let m = p.mid();
        parts.push(Interval::new(p.lo.clone(), m.clone()));
        parts.push(Interval::new(m.clone(), m));
    }
    IntervalSet::from_intervals(parts)
}

proptest! {
    #[test]
    fn boolean_ops_match_cellwise_logic(a in cells(), b in cells()) {
        let (sa, sb) = (from_mask(&a), from_mask(&b));
        let or: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x || *y).collect();
        let and: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x && *y).collect();
        let minus: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *x && !*y).collect();
        prop_assert_eq!(to_mask(&sa.union(&sb), G), or.clone());
        prop_assert_eq!(to_mask(&sa.intersect(&sb), G), and.clone());
        prop_assert_eq!(to_mask(&sa.subtract(&sb), G), minus);
        prop_assert_eq!(sa.union(&sb), from_mask(&or));
        prop_assert_eq!(sa.intersect(&sb), from_mask(&and));
    }

    #[test]
    fn measure_counts_cells(a in cells()) {
        let n = a.iter().filter(|x| **x).count() as i64;
        prop_assert_eq!(from_mask(&a).measure(), q(n, G));
        let c: Vec<bool> = a.iter().map(|x| !*x).collect();
        prop_assert_eq!(from_mask(&a).complement_unit(), from_mask(&c));
    }

    #[test]
    fn canonical_form_ignores_input_order(a in cells(), cut in 0usize..8) {
        prop_assert_eq!(scrambled(&a, cut), from_mask(&a));
    }

    #[test]
    fn parts_are_separated(a in cells(), b in cells()) {
        let s = from_mask(&a).union(&from_mask(&b));
        for w in s.parts().windows(2) {
            prop_assert!(scalar::lt(&w[0].hi, &w[1].lo));
        }
        for p in s.parts() {
            prop_assert!(scalar::lt(&p.lo, &p.hi));
        }
    }

    #[test]
    fn doubling_image_matches_cell_map(a in cells()) {
        // Cell c maps onto cells 2c and 2c + 1 mod G.
        let mut want = vec![false; G as usize];
        for (c, on) in a.iter().enumerate() {
            if *on {
                want[(2 * c) % G as usize] = true;
                want[(2 * c + 1) % G as usize] = true;
            }
        }
        prop_assert_eq!(to_mask(&CircleMap::doubling().image(&from_mask(&a)), G), want);
    }

    #[test]
    fn tripling_preimage_matches_cell_map(a in cells()) {
        // A cell of width 1/(3G) lies in the preimage iff its image cell is marked.
        let g3 = 3 * G;
        let want: Vec<bool> = (0..g3).map(|c| a[((3 * c) % g3 / 3) as usize]).collect();
        let pre = CircleMap::tripling().preimage(&from_mask(&a)).unwrap();
        prop_assert_eq!(to_mask(&pre, g3), want);
        prop_assert_eq!(pre.measure(), from_mask(&a).measure());
    }

    #[test]
    fn rotation_image_shifts_cells(a in cells(), k in 1i64..G) {
        let f = CircleMap::rotation(q(k, G)).unwrap();
        let want: Vec<bool> = (0..G).map(|c| a[((c - k).rem_euclid(G)) as usize]).collect();
        prop_assert_eq!(to_mask(&f.image(&from_mask(&a)), G), want);
    }
}
