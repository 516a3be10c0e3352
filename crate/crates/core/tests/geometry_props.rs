use boxforge_core::geometry::{compute_maps_fast, compute_maps_reference, normalize_distance, BoundingBox, MapOptions};
use proptest::prelude::*;

/// Brute force over every perimeter pixel of every box, kept independent of
/// the library code paths.
fn oracle(boxes: &[BoundingBox], h: usize, w: usize) -> (Vec<f64>, Vec<u8>) {
    let perimeter = |b: &BoundingBox| {
        let mut v = Vec::new();
        for i in b.i_min..=b.i_max {
            for j in b.j_min..=b.j_max {
                if i == b.i_min || i == b.i_max || j == b.j_min || j == b.j_max {
                    v.push((i as f64, j as f64));
                }
            }
        }
        v
    };
    let perims: Vec<_> = boxes.iter().map(perimeter).collect();
    let mut dist = Vec::with_capacity(h * w);
    let mut class = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            if boxes.is_empty() {
                dist.push(-(h.max(w) as f64));
                class.push(0);
                continue;
            }
            let per_box: Vec<f64> = perims
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|&(a, b)| ((i as f64 - a).powi(2) + (j as f64 - b).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let nearest = per_box.iter().copied().fold(f64::INFINITY, f64::min);
            let inside = |k: usize| {
                let b = &boxes[k];
                b.i_min <= i && i <= b.i_max && b.j_min <= j && j <= b.j_max
            };
            let mut owner: Option<usize> = None;
            for k in 0..boxes.len() {
                if inside(k) && owner.map_or(true, |o| per_box[k] < per_box[o]) {
                    owner = Some(k);
                }
            }
            match owner {
                Some(k) => {
                    dist.push(nearest);
                    class.push(boxes[k].class_id);
                }
                None => {
                    dist.push(-nearest);
                    class.push(0);
                }
            }
        }
    }
    (dist, class)
}

fn arb_instance(max_dim: usize, max_boxes: usize) -> impl Strategy<Value = (usize, usize, Vec<BoundingBox>)> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(move |(h, w)| {
        let b = (1u8..=4, 0..h, 0..h, 0..w, 0..w).prop_map(|(c, a, b, x, y)| BoundingBox::new(c, a.min(b), x.min(y), a.max(b), x.max(y)));
        (Just(h), Just(w), prop::collection::vec(b, 0..=max_boxes))
    })
}

#[test]
fn two_overlapping_boxes_on_16x16_match_oracle() {
    let boxes = [BoundingBox::new(1, 2, 2, 9, 10), BoundingBox::new(2, 6, 5, 13, 14)];
    let (d, c) = oracle(&boxes, 16, 16);
    for maps in [
        compute_maps_reference(&boxes, 16, 16, MapOptions::default()).unwrap(),
        compute_maps_fast(&boxes, 16, 16, MapOptions::default()).unwrap(),
    ] {
        for (k, (&got, &want)) in maps.distance.iter().zip(&d).enumerate() {
            assert!((got - want).abs() <= 1e-9, "pixel {k}: {got} vs {want}");
        }
        assert_eq!(maps.class_map.iter().copied().collect::<Vec<_>>(), c);
    }
    // overlap region is split between the two classes by nearest boundary
    let maps = compute_maps_fast(&boxes, 16, 16, MapOptions::default()).unwrap();
    let overlap: Vec<u8> = (6..=9).flat_map(|i| (5..=10).map(move |j| (i, j))).map(|(i, j)| maps.class_map[[i, j]]).collect();
    assert!(overlap.contains(&1) && overlap.contains(&2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_matches_reference_and_oracle((h, w, boxes) in arb_instance(24, 6)) {
        let r = compute_maps_reference(&boxes, h, w, MapOptions::default()).unwrap();
        let f = compute_maps_fast(&boxes, h, w, MapOptions::default()).unwrap();
        let (od, oc) = oracle(&boxes, h, w);
        for ((a, b), o) in r.distance.iter().zip(f.distance.iter()).zip(&od) {
            prop_assert!((a - b).abs() <= 1e-9);
            prop_assert!((a - o).abs() <= 1e-9);
        }
        prop_assert_eq!(&r.class_map, &f.class_map);
        prop_assert_eq!(r.class_map.iter().copied().collect::<Vec<_>>(), oc);
    }

    #[test]
    fn sign_follows_containment((h, w, boxes) in arb_instance(40, 6)) {
        let m = compute_maps_fast(&boxes, h, w, MapOptions::default()).unwrap();
        for ((i, j), &d) in m.distance.indexed_iter() {
            let inside = boxes.iter().any(|b| b.i_min <= i && i <= b.i_max && b.j_min <= j && j <= b.j_max);
            prop_assert_eq!(d >= 0.0, inside);
            let c = m.class_map[[i, j]];
            prop_assert!(c == 0 || boxes.iter().any(|b| b.class_id == c));
            prop_assert_eq!(c != 0, inside);
            // strictly inside exactly one box -> that box's class
            let strict: Vec<_> = boxes.iter().filter(|b| b.i_min < i && i < b.i_max && b.j_min < j && j < b.j_max).collect();
            let containing = boxes.iter().filter(|b| b.contains(i, j)).count();
            if strict.len() == 1 && containing == 1 {
                prop_assert_eq!(c, strict[0].class_id);
            }
        }
        let n = normalize_distance(&m);
        for (&v, &d) in n.iter().zip(m.distance.iter()) {
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert_eq!(v >= 0.0, d >= 0.0);
        }
    }

    #[test]
    fn single_box_interior_is_axis_gap((h, w, boxes) in arb_instance(40, 1)) {
        prop_assume!(boxes.len() == 1);
        let b = boxes[0];
        let m = compute_maps_fast(&boxes, h, w, MapOptions::default()).unwrap();
        for i in b.i_min..=b.i_max {
            for j in b.j_min..=b.j_max {
                let want = (i - b.i_min).min(b.i_max - i).min(j - b.j_min).min(b.j_max - j) as f64;
                prop_assert_eq!(m.distance[[i, j]], want);
            }
        }
    }

    #[test]
    fn translation_equivariance(
        (h, w, boxes) in arb_instance(20, 4),
        di in 0usize..6,
        dj in 0usize..6,
    ) {
        prop_assume!(!boxes.is_empty());
        let (h2, w2) = (h + di, w + dj);
        let moved: Vec<_> = boxes.iter().map(|b| b.translated(di as isize, dj as isize).unwrap()).collect();
        // a large canvas makes the shifted copy see the same neighbourhood
        let pad = 64;
        let a = compute_maps_fast(&boxes, h + pad, w + pad, MapOptions::default()).unwrap();
        let b = compute_maps_fast(&moved, h2 + pad, w2 + pad, MapOptions::default()).unwrap();
        for i in 0..h {
            for j in 0..w {
                prop_assert_eq!(a.distance[[i, j]], b.distance[[i + di, j + dj]]);
                prop_assert_eq!(a.class_map[[i, j]], b.class_map[[i + di, j + dj]]);
            }
        }
    }
}
