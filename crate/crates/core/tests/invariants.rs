use bihmap::bienergy::{energy, minimize, random_interior, MinimizeConfig};
use bihmap::homogeneity::{deficit_table, min_chain, FitOptions};
use bihmap::monotonicity::{density_profile, theta, w_annulus};
use bihmap::oracle::OracleMap;
use bihmap::regscale::{RegScale, CERTIFICATE_TOL};
use bihmap::strata::{
    decomposition_census, scan_fit_options, SampleRegion, ScaleLadder, StrataScan, TubeGrid, DEFAULT_GAMMA,
};
use bihmap::{jet_at, load_field, save_field, GridDomain, SphereField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(dim: usize, nodes: usize, comps: usize, seed: u64) -> SphereField {
    let d = GridDomain::centered(dim, nodes, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(d.node_count() * comps);
    for _ in 0..d.node_count() {
        let v: Vec<f64> = (0..comps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        values.extend(v.iter().map(|a| a / n));
    }
    SphereField::new(d, comps - 1, values).unwrap()
}

/// Orthogonal matrix from Gram-Schmidt on seeded Gaussian-ish rows.
fn rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 {
            rows.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    rows
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_rotation_invariant(seed in 0u64..1000, rot in 0u64..1000, dim in 2usize..4) {
        let f = random_field(dim, 10, 3, seed);
        let g = f.map_values(&rotation(3, rot)).unwrap();
        prop_assert!(rel(energy(&g), energy(&f)) < 1e-12);
    }

    #[test]
    fn rotated_fields_stay_on_the_sphere(seed in 0u64..1000, rot in 0u64..1000) {
        let g = random_field(2, 9, 4, seed).map_values(&rotation(4, rot)).unwrap();
        for lin in 0..g.domain().node_count() {
            let n: f64 = g.value(lin).iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip_is_bitwise(seed in 0u64..1000, dim in 2usize..5, comps in 2usize..5, shift in -1.0f64..1.0) {
        let base = random_field(dim, 8, comps, seed);
        let d = GridDomain::new(dim, 8, vec![shift; dim], 0.5 + shift.abs()).unwrap();
        let f = SphereField::new(d, comps - 1, base.values().to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bhf");
        save_field(&f, &p).unwrap();
        let back = load_field(&p).unwrap();
        prop_assert_eq!(back.domain(), f.domain());
        prop_assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn jet_components_ignore_index_order(a in 0usize..3, b in 0usize..3, c in 0usize..3, e in 0usize..3) {
        let d = GridDomain::centered(3, 14, 1.0).unwrap();
        let f = OracleMap::geodesic_wrap(3, 2, 1.7).unwrap().rasterize(&d).unwrap();
        let jet = jet_at(&f, d.linear(&[6, 7, 7]), 4).unwrap();
        let t = [a, b, c, e];
        for perm in [[0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]] {
            let p: Vec<usize> = perm.iter().map(|&i| t[i]).collect();
            prop_assert_eq!(jet.component(&p), jet.component(&t));
        }
    }

    #[test]
    fn annulus_route_is_non_negative(seed in 0u64..1000, s in 0.35f64..0.5, dt in 0.05f64..0.3) {
        let f = random_field(3, 24, 3, seed);
        prop_assert!(w_annulus(&f, &[0.02, -0.01, 0.03], s, s + dt).unwrap() >= 0.0);
    }

    #[test]
    fn exact_density_of_projection_is_scale_free(r in 0.05f64..3.0, m in 5usize..7) {
        let o = OracleMap::radial(m).unwrap();
        let base = o.exact_theta(&vec![0.0; m], 1.0).unwrap();
        prop_assert!(rel(o.exact_theta(&vec![0.0; m], r).unwrap(), base) < 1e-10);
    }

    #[test]
    fn min_chain_is_monotone_and_below_raw(raw in proptest::collection::vec(0.0f64..10.0, 1..8)) {
        let c = min_chain(&raw);
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.iter().zip(&raw).all(|(a, b)| a <= b));
        prop_assert_eq!(c.last(), raw.last());
    }

    #[test]
    fn tube_volume_grows_with_radius(seed in 0u64..1000, count in 1usize..6) {
        let d = GridDomain::centered(3, 24, 1.0).unwrap();
        let region = SampleRegion::new(vec![0.0; 3], 0.6, 1).unwrap();
        let nodes = region.nodes(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members: Vec<usize> = (0..count).map(|_| nodes[rng.gen_range(0..nodes.len())]).collect();
        members.sort_unstable();
        members.dedup();
        let tubes = TubeGrid::new(&d, &region).unwrap();
        let v = tubes.volumes(&members, &[0.05, 0.1, 0.2, 0.3, 0.5]);
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{:?}", v);
        prop_assert!(v[0] > 0.0);
    }

    #[test]
    fn regularity_scale_respects_cap_and_certificate(seed in 0u64..1000) {
        let d = GridDomain::centered(3, 24, 1.0).unwrap();
        let f = OracleMap::radial(3).unwrap().rasterize(&d).unwrap();
        let rs = RegScale::new(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let r = rs.reg_scale(&x);
        prop_assert!(r <= rs.cap(&x) + 1e-12);
        prop_assert!(rs.certificate_holds(&x, r, CERTIFICATE_TOL).unwrap());
    }
}

#[test]
fn minimizer_keeps_unit_norm_and_monotone_trace() {
    let d = GridDomain::centered(2, 12, 1.0).unwrap();
    let b = OracleMap::geodesic_wrap(2, 2, 1.0).unwrap().rasterize(&d).unwrap();
    let cfg = MinimizeConfig::default();
    let (g, trace) = minimize(&random_interior(&b, 2, 1), &b, &cfg).unwrap();
    assert!(trace.records.windows(2).all(|w| w[1].energy <= w[0].energy));
    for lin in 0..d.node_count() {
        let n: f64 = g.value(lin).iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
    // collar values are frozen
    let layers = d.layers();
    for lin in (0..d.node_count()).filter(|&l| (layers[l] as usize) < cfg.collar_width) {
        assert_eq!(g.value(lin), b.value(lin));
    }
    // a converged output is a fixed point
    let (g2, _) = minimize(&g, &b, &cfg).unwrap();
    assert!((energy(&g) - energy(&g2)).abs() < cfg.el_tolerance * d.spacing().powi(2));
}

#[test]
fn oracle_profiles_are_monotone_and_bounded() {
    let d = GridDomain::centered(3, 24, 1.0).unwrap();
    let f = OracleMap::radial(3).unwrap().rasterize(&d).unwrap();
    let p = density_profile(&f, &[0.05, 0.0, -0.03], &[0.4, 0.5, 0.6, 0.7], None).unwrap();
    assert!(p.is_monotone() && p.within_bound());
    assert!(theta(&f, &[0.0; 3], 0.1).is_err(), "radii below 4h are rejected");
}

#[test]
fn deficits_are_monotone_and_rotation_invariant() {
    let d = GridDomain::centered(3, 28, 1.0).unwrap();
    let f = OracleMap::cylindrical(3, 1).unwrap().rasterize(&d).unwrap();
    let x = [0.05, -0.02, 0.1];
    let opts = FitOptions::default();
    let t = deficit_table(&f, &x, &[0.3, 0.5], &opts).unwrap();
    assert!(t.deficits.iter().all(|row| row.windows(2).all(|w| w[0] <= w[1])));
    let g = f.map_values(&rotation(2, 9)).unwrap();
    let tg = deficit_table(&g, &x, &[0.3, 0.5], &opts).unwrap();
    for (a, b) in t.deficits.iter().flatten().zip(tg.deficits.iter().flatten()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn strata_are_nested() {
    let d = GridDomain::centered(3, 28, 1.0).unwrap();
    let f = OracleMap::cylindrical(3, 1).unwrap().rasterize(&d).unwrap();
    let scales = [0.2, 0.3, 0.4];
    let region = SampleRegion::new(vec![0.0; 3], 0.3, 2).unwrap();
    let scan = StrataScan::new(&f, &scales, region, scan_fit_options()).unwrap();
    let mut sets = Vec::new();
    for k in 0..3 {
        for eta in [0.02, 0.08] {
            for a in scan.strata(k, eta, &[0.2, 0.3, 0.4], &[]).unwrap() {
                sets.push((k, eta, a.r, a.members));
            }
        }
    }
    for (k, eta, r, a) in &sets {
        for (k2, eta2, r2, b) in &sets {
            if k <= k2 && eta2 <= eta && r <= r2 {
                assert!(
                    a.iter().all(|x| b.binary_search(x).is_ok()),
                    "S^{k}_({eta},{r}) not inside S^{k2}_({eta2},{r2})"
                );
            }
        }
    }
    // the singular line is in S^1 but not in S^0 at the smallest r
    let s0 = sets.iter().find(|s| s.0 == 0 && s.1 == 0.08 && s.2 == 0.2).unwrap();
    let s1 = sets.iter().find(|s| s.0 == 1 && s.1 == 0.08 && s.2 == 0.2).unwrap();
    assert!(s1.3.len() > s0.3.len());
}

#[test]
fn census_respects_its_bounds() {
    let d = GridDomain::centered(2, 200, 1.0).unwrap();
    let f = OracleMap::radial(2).unwrap().rasterize(&d).unwrap();
    let ladder = ScaleLadder::resolved(DEFAULT_GAMMA, 1, 0.9, d.spacing()).unwrap();
    assert!(ladder.beta_max >= 2);
    let points = SampleRegion::new(vec![0.0; 2], 0.2, 6).unwrap().points(&d);
    let radii: Vec<f64> = (1..=ladder.beta_max).flat_map(|j| ladder.pairs(j)).flat_map(|(s, t)| [s, t]).collect();
    let lambda = bihmap::monotonicity::lambda_bound(&f, &points, &radii).unwrap();
    let (c, seqs) = decomposition_census(&f, &ladder, 0.05 * lambda, lambda, &points).unwrap();
    assert!(c.nbound_holds());
    assert!(c.classes.windows(2).all(|w| w[0] <= w[1]));
    for (b, &n) in c.classes.iter().enumerate() {
        assert!(n as f64 <= c.word_bound(b + 1));
    }
    assert_eq!(seqs.len(), points.len());
}
