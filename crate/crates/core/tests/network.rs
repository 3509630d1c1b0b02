use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recovery_core::network::*;

fn oracle_dist(a: GeoPoint, b: GeoPoint) -> f64 {
    match a.frame {
        Frame::LocalPlaneKm => ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt(),
        Frame::Wgs84 => {
            // Spherical law of cosines via the vector dot product.
            let v = |p: GeoPoint| {
                let (lat, lon) = (p.y.to_radians(), p.x.to_radians());
                [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
            };
            let (u, w) = (v(a), v(b));
            let cross = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
            let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
            let cos = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
            6371.0 * sin.atan2(cos)
        }
    }
}

fn brute_intra(points: &[GeoPoint], r: f64) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if distance(points[i], points[j]).unwrap() <= r {
                v.push((i, j));
            }
        }
    }
    v
}

fn brute_inter(a: &[GeoPoint], b: &[GeoPoint], r: f64) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            if distance(*p, *q).unwrap() <= r {
                v.push((i, j));
            }
        }
    }
    v
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, frame: Frame) -> Vec<GeoPoint> {
    (0..n)
        .map(|_| match frame {
            Frame::LocalPlaneKm => GeoPoint::local(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            Frame::Wgs84 => GeoPoint::wgs84(rng.random_range(-95.6..-95.4), rng.random_range(29.6..29.8)).unwrap(),
        })
        .collect()
}

#[test]
fn haversine_agrees_with_vector_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let a = GeoPoint::wgs84(rng.random_range(-180.0..180.0), rng.random_range(-89.0..89.0)).unwrap();
        let b = GeoPoint::wgs84(rng.random_range(-180.0..180.0), rng.random_range(-89.0..89.0)).unwrap();
        let d = distance(a, b).unwrap();
        assert!((d - oracle_dist(a, b)).abs() < 1e-6 * d.max(1.0), "{a:?} {b:?}");
    }
}

/// One hundred random instances with up to 500 points each, both frames.
#[test]
fn edge_builders_match_quadratic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..100 {
        let frame = if instance % 2 == 0 { Frame::LocalPlaneKm } else { Frame::Wgs84 };
        let n = rng.random_range(1..=500);
        let m = rng.random_range(1..=60);
        let r = rng.random_range(0.05..3.0);
        let homes = random_points(&mut rng, n, frame);
        let pois = random_points(&mut rng, m, frame);
        assert_eq!(build_intra_edges(&homes, r).unwrap(), brute_intra(&homes, r), "instance {instance}");
        assert_eq!(build_inter_edges(&homes, &pois, r).unwrap(), brute_inter(&homes, &pois, r), "instance {instance}");
    }
}

#[test]
fn antimeridian_and_polar_points_fall_back_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pts: Vec<GeoPoint> = (0..200)
        .map(|_| GeoPoint::wgs84(rng.random_range(179.9..180.0), rng.random_range(-1.0..1.0)).unwrap())
        .collect();
    pts.extend((0..200).map(|_| GeoPoint::wgs84(rng.random_range(-180.0..-179.9), rng.random_range(-1.0..1.0)).unwrap()));
    assert_eq!(build_intra_edges(&pts, 5.0).unwrap(), brute_intra(&pts, 5.0));
    let polar: Vec<GeoPoint> =
        (0..200).map(|_| GeoPoint::wgs84(rng.random_range(-180.0..180.0), rng.random_range(89.95..90.0)).unwrap()).collect();
    assert_eq!(build_intra_edges(&polar, 3.0).unwrap(), brute_intra(&polar, 3.0));
}

#[test]
fn network_layers_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let homes = random_points(&mut rng, 120, Frame::LocalPlaneKm);
    let pois = random_points(&mut rng, 15, Frame::LocalPlaneKm);
    let net = MultilayerNetwork::build(homes.clone(), pois.clone(), GeoPoint::local(0.0, 0.0), Radii::default()).unwrap();
    for j in 0..120 {
        for &k in net.home_neighbors(j) {
            assert!(net.home_neighbors(k as usize).contains(&(j as u32)));
            assert_ne!(k as usize, j);
        }
        for &k in net.home_pois(j) {
            assert!(oracle_dist(homes[j], pois[k as usize]) <= NEIGHBORHOOD_RADIUS_KM + 1e-12);
        }
    }
    let p = net.neighbors(NodeId::physical(), Layer::Home).unwrap();
    assert_eq!(p.len(), 120);
    assert_eq!(net.neighbors(NodeId::physical(), Layer::Physical).unwrap(), vec![NodeId::physical()]);
    assert!(net.neighbors(NodeId::home(500), Layer::Home).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_are_deduplicated_and_within_radius(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..120),
        r in 0.01f64..4.0,
    ) {
        let points: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::local(x, y)).collect();
        let edges = build_intra_edges(&points, r).unwrap();
        let mut sorted = edges.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), edges.len());
        for &(i, j) in &edges {
            prop_assert!(i < j);
            prop_assert!(oracle_dist(points[i], points[j]) <= r + 1e-12);
        }
    }

    #[test]
    fn larger_radius_gives_superset(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..150),
        r in 0.01f64..3.0,
        extra in 0.0f64..2.0,
    ) {
        let points: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::local(x, y)).collect();
        let small: std::collections::BTreeSet<_> = build_intra_edges(&points, r).unwrap().into_iter().collect();
        let big: std::collections::BTreeSet<_> = build_intra_edges(&points, r + extra).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&big));
    }
}
