mod common;

use dual_aeb::geometry::{box_within_area, normalize_angle, obb_intersects, polygon_contains, OrientedBox, Polygon, Pose2D, Vec2};
use proptest::prelude::*;

use common::{box_corners, point_in_polygon, quads_overlap};

/// Grid points shared by both boxes, 5 cm spacing over their joint bounds.
fn raster_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = box_corners(a);
    let cb = box_corners(b);
    let all = ca.iter().chain(&cb);
    let (x0, x1) = all.clone().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y0, y1) = all.fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let step = 0.05;
    let inside = |q: &[(f64, f64); 4], p: (f64, f64)| point_in_polygon(q, p);
    let mut y = y0;
    while y <= y1 {
        let mut x = x0;
        while x <= x1 {
            if inside(&ca, (x, y)) && inside(&cb, (x, y)) {
                return true;
            }
            x += step;
        }
        y += step;
    }
    false
}

/// Largest separating gap along the four edge normals, negative on overlap.
fn separation(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let ca = box_corners(a);
    let cb = box_corners(b);
    let mut best = f64::MIN;
    for h in [a.center.heading, b.center.heading] {
        for axis in [(h.cos(), h.sin()), (-h.sin(), h.cos())] {
            let proj = |c: &[(f64, f64); 4]| {
                c.iter().map(|p| p.0 * axis.0 + p.1 * axis.1).fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
            };
            let (amin, amax) = proj(&ca);
            let (bmin, bmax) = proj(&cb);
            best = best.max((bmin - amax).max(amin - bmax));
        }
    }
    best
}

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (-6.0f64..6.0, -6.0f64..6.0, -4.0f64..4.0, 0.2f64..5.0, 0.2f64..3.0)
        .prop_map(|(x, y, h, l, w)| OrientedBox::from_dims(Pose2D::new(x, y, h), l, w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn intersection_matches_raster(a in arb_box(), b in arb_box()) {
        // the raster misses slivers thinner than its pitch; skip near-touching pairs
        prop_assume!(separation(&a, &b).abs() > 0.1);
        prop_assert_eq!(obb_intersects(&a, &b), raster_overlap(&a, &b));
    }

    #[test]
    fn intersection_matches_edge_crossing(a in arb_box(), b in arb_box()) {
        prop_assume!(separation(&a, &b).abs() > 1e-6);
        prop_assert_eq!(obb_intersects(&a, &b), quads_overlap(&box_corners(&a), &box_corners(&b)));
    }

    #[test]
    fn intersection_is_symmetric(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(obb_intersects(&a, &b), obb_intersects(&b, &a));
    }

    #[test]
    fn box_meets_itself(a in arb_box()) {
        prop_assert!(obb_intersects(&a, &a));
    }

    #[test]
    fn translation_invariance(a in arb_box(), b in arb_box(), dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
        let shift = |o: &OrientedBox| o.with_center(o.center.translated(Vec2::new(dx, dy)));
        prop_assume!(separation(&a, &b).abs() > 1e-6);
        prop_assert_eq!(obb_intersects(&a, &b), obb_intersects(&shift(&a), &shift(&b)));
    }

    #[test]
    fn normalized_angle_in_range(a in -1e4f64..1e4) {
        let n = normalize_angle(a);
        prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&n));
        prop_assert!((n - a).rem_euclid(std::f64::consts::TAU).min(std::f64::consts::TAU - (n - a).rem_euclid(std::f64::consts::TAU)) < 1e-6);
    }

    #[test]
    fn containment_matches_crossing_number(px in -12.0f64..12.0, py in -12.0f64..12.0, k in 3usize..9, r in 2.0f64..10.0) {
        // star-shaped but convex: regular polygon
        let verts: Vec<Vec2> = (0..k).map(|i| {
            let t = std::f64::consts::TAU * i as f64 / k as f64;
            Vec2::new(r * t.cos(), r * t.sin())
        }).collect();
        let raw: Vec<(f64, f64)> = verts.iter().map(|v| (v.x, v.y)).collect();
        let poly = Polygon::new(verts).unwrap();
        prop_assert_eq!(polygon_contains(&poly, Vec2::new(px, py)), point_in_polygon(&raw, (px, py)));
    }
}

#[test]
fn box_membership_follows_center() {
    let area = Polygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
    let straddling = OrientedBox::from_dims(Pose2D::new(9.5, 5.0, 0.0), 4.0, 2.0).unwrap();
    let outside = OrientedBox::from_dims(Pose2D::new(10.5, 5.0, 0.0), 4.0, 2.0).unwrap();
    assert!(box_within_area(&straddling, &area));
    assert!(!box_within_area(&outside, &area));
}

#[test]
fn clockwise_and_degenerate_polygons_rejected() {
    assert!(Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)]).is_err());
    assert!(Polygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]).is_err());
    let bowtie = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
    assert!(Polygon::new(bowtie).is_err());
}
