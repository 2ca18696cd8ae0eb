//! Randomized invariants across the geometry, costmap, planning, dynamics and physics layers.

use icenav_core::costmap::{build_costmap, concentration_penalty, ke_loss, CostField, Costmap, CostmapParams};
use icenav_core::dynamics::{allocate_unclipped, VesselModel};
use icenav_core::geometry::{convex_hull, signed_area, wrap_2pi, wrap_pi, GridSpec};
use icenav_core::icefield::{generate_field, occupancy_image, FieldSpec};
use icenav_core::lattice::{generate_control_set, plan_path, ControlSet, LatticeSpec};
use icenav_core::optimizer::default_body_points;
use icenav_core::physics::{PhysicsParams, SimWorld};
use icenav_core::{IceFloe, Point2, Pose, ShipFootprint};
use nalgebra::Vector3;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

fn control_set() -> &'static ControlSet {
    static CS: OnceLock<ControlSet> = OnceLock::new();
    CS.get_or_init(|| {
        let spec = LatticeSpec { spacing: 10.0, neighborhood: 4.0, ..LatticeSpec::default() };
        generate_control_set(&spec, &ShipFootprint::default(), 2.0).unwrap()
    })
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Point2::new(x, y)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wrapped_angles_land_in_range(a in -1e4..1e4f64) {
        let w = wrap_2pi(a);
        prop_assert!((0.0..TAU).contains(&w));
        let p = wrap_pi(a);
        prop_assert!(p > -PI && p <= PI);
        prop_assert!(((a - p) / TAU - ((a - p) / TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn hull_is_ccw_and_contains_inputs(pts in points(3..30)) {
        if let Ok(hull) = convex_hull(&pts) {
            prop_assert!(signed_area(hull.vertices()) > 0.0);
            for (a, b) in hull.edges() {
                for p in &pts {
                    prop_assert!((b - a).cross(*p - a) >= -1e-9 * (b - a).norm().max(1.0) * 100.0);
                }
            }
        }
    }

    #[test]
    fn floe_mass_is_density_thickness_area(pts in points(3..12), h in 0.1..5.0f64, rho in 800.0..1000.0f64) {
        if let Ok(hull) = convex_hull(&pts) {
            let area = hull.area();
            prop_assume!(area > 1e-3);
            let floe = IceFloe::new(0, hull, h, rho).unwrap();
            prop_assert!((floe.mass - rho * h * area).abs() <= 1e-9 * floe.mass);
        }
    }

    #[test]
    fn energy_loss_is_nonnegative(r in 0.1..100.0f64, t in 0.0..1.0f64, m_ice in 1.0..1e7f64, m_ship in 1e3..1e8f64, u in 0.0..10.0f64) {
        let l = ke_loss(t * r, r, m_ice, m_ship, u).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!(l <= 0.5 * m_ship * u * u * (1.0 + 1e-12));
    }

    #[test]
    fn concentration_stays_in_unit_interval(bits in prop::collection::vec(0u8..2, 12 * 9), z in prop::sample::select(vec![1usize, 3, 5, 7, 21])) {
        let img = concentration_penalty(&bits, 12, 9, z, 1.0).unwrap();
        prop_assert!(img.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let full = concentration_penalty(&vec![1; 12 * 9], 12, 9, z, 1.0).unwrap();
        prop_assert!(full.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn allocation_reproduces_demand(x in -1e6..1e6f64, y in -1e6..1e6f64, n in -1e7..1e7f64) {
        let model = VesselModel::default_psv();
        let u = allocate_unclipped([x, y, n], &model);
        let back = model.t * u.component_mul(&model.k);
        let want = Vector3::new(x, y, n);
        prop_assert!((back - want).norm() <= 1e-8 * want.norm().max(1.0));
    }

    #[test]
    fn body_points_fit_inside_the_hull_box(db in 1.0..20.0f64, alpha in 0.0..1e-5f64) {
        let fp = ShipFootprint::default();
        let body = default_body_points(&fp, db, alpha, 2.0).unwrap();
        let (lo, hi) = fp.outline.bounds();
        prop_assert_eq!(body.points.len(), body.weights.len());
        prop_assert!(body.points.iter().all(|p| p.x >= lo.x - 1e-9 && p.x <= hi.x + 1e-9 && p.y >= lo.y - 1e-9 && p.y <= hi.y + 1e-9));
        let expected = alpha * db * db / (fp.length * 4.0);
        prop_assert!(body.weights.iter().all(|&w| (w - expected).abs() <= 1e-15 + 1e-12 * expected));
    }

    #[test]
    fn off_multiple_control_step_is_rejected(k in 1u32..50, frac in 0.1..0.9f64) {
        let field = icenav_core::IceField::empty(100.0, 80.0);
        let params = PhysicsParams::default();
        let mut w = SimWorld::new(&field, ShipFootprint::default(), Pose::new(0.0, 40.0, 0.0), params).unwrap();
        let bad = (k as f64 + frac) * params.dt_sim;
        prop_assert!(w.step_world(Pose::new(0.0, 40.0, 0.0), bad).is_err());
        prop_assert!(w.step_world(Pose::new(0.0, 40.0, 0.0), k as f64 * params.dt_sim).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn costmap_is_nonnegative_and_zero_off_ice(seed in 0u64..1000, conc in 0.1..0.5f64, x0 in -50.0..200.0f64) {
        let field = generate_field(&FieldSpec::desk(conc), seed).unwrap();
        let grid = GridSpec::covering(2.0, x0, x0 + 120.0, 0.0, 80.0).unwrap();
        let map = build_costmap(&field, &grid, 2.0, 6e6, &CostmapParams { kernel: 21, ..CostmapParams::default() }).unwrap();
        for (c, id) in map.cost.iter().zip(&map.obstacle_id) {
            prop_assert!(*c >= 0.0);
            if id.is_none() {
                prop_assert_eq!(*c, 0.0);
            }
        }
        // Occupied cells always fall under some floe's inflated footprint.
        let occ = occupancy_image(&field, &grid);
        for (o, id) in occ.iter().zip(&map.obstacle_id) {
            if *o == 1 {
                prop_assert!(id.is_some());
            }
        }
    }

    #[test]
    fn cost_field_matches_knots_and_stays_nonnegative(costs in prop::collection::vec(0.0..1e6f64, 15 * 10), qx in -10.0..40.0f64, qy in -10.0..30.0f64) {
        let grid = GridSpec::covering(2.0, 0.0, 30.0, 0.0, 20.0).unwrap();
        let mut map = Costmap::zeros(grid);
        map.cost.copy_from_slice(&costs[..grid.len()]);
        let field = CostField::with_defaults(&map, 18.0).unwrap();
        for iy in 0..grid.n_rows {
            for ix in 0..grid.n_cols {
                let p = grid.cell_center(ix, iy);
                let want = map.at(ix, iy);
                prop_assert!((field.value(p.x, p.y) - want).abs() <= 1e-9 * want.max(1.0));
            }
        }
        prop_assert!(field.value(qx, qy) >= 0.0);
    }

    #[test]
    fn lattice_plans_are_connected_and_consistent(seed in 0u64..1000, y in 25.0..55.0f64, alpha in 0.0..1e-5f64) {
        let field = generate_field(&FieldSpec::desk(0.3), seed).unwrap();
        let grid = GridSpec::covering(2.0, -20.0, 140.0, 0.0, 80.0).unwrap();
        let map = build_costmap(&field, &grid, 2.0, 6e6, &CostmapParams { kernel: 21, ..CostmapParams::default() }).unwrap();
        let cs = control_set();
        let Ok(plan) = plan_path(&Pose::new(0.0, y, 0.0), 60.0, &map, cs, alpha, 18.0) else { return Ok(()) };
        prop_assert!((plan.objective - (plan.length + alpha * plan.collision_cost)).abs() <= 1e-9 * plan.objective.max(1.0));
        prop_assert_eq!(plan.nodes.len(), plan.primitives.len() + 1);
        for (k, &p) in plan.primitives.iter().enumerate() {
            let (a, b) = (plan.nodes[k], plan.nodes[k + 1]);
            let prim = &cs.by_heading[a.h][p];
            prop_assert_eq!((b.i - a.i, b.j - a.j, b.h), (prim.di, prim.dj, prim.end_heading));
        }
        for w in plan.path.poses.windows(2) {
            prop_assert!(w[0].position().dist(w[1].position()) <= cs.spec.spacing * cs.spec.neighborhood);
        }
    }

    #[test]
    fn ship_impulses_are_nonnegative(seed in 0u64..1000, dy in -5.0..5.0f64) {
        let field = generate_field(&FieldSpec::desk(0.5), seed).unwrap();
        let mut w = SimWorld::new(&field, ShipFootprint::default(), Pose::new(-40.0, 40.0, 0.0), PhysicsParams::default()).unwrap();
        for k in 1..=100 {
            let t = k as f64 * 0.1;
            let out = w.step_world(Pose::new(-40.0 + 2.0 * t, 40.0 + dy * t / 10.0, 0.0), 0.1).unwrap();
            for e in &out.events {
                prop_assert!(e.impulse >= 0.0 && e.impulse.is_finite());
            }
        }
    }
}

#[test]
fn primitives_respect_the_turning_radius() {
    let cs = control_set();
    let k_max = 1.0 / cs.spec.r_min;
    for prims in &cs.by_heading {
        for p in prims {
            for w in p.poses.windows(2) {
                let ds = w[0].position().dist(w[1].position());
                if ds > 1e-9 {
                    let dpsi = wrap_pi(w[1].psi - w[0].psi).abs();
                    // A chord is shorter than its arc, so allow the chord-to-arc ratio.
                    assert!(dpsi / ds <= k_max * (1.0 + 1e-3), "curvature {} over {k_max}", dpsi / ds);
                }
            }
        }
    }
}
