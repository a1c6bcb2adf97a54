use facecloud::geometry::{
    ball_query, dfps, dfps_resolved, estimate_normals, fps, Neighborhood, Point3, PointCloud, SamplingParams,
    SpatialIndex, EIGEN_EPS,
};
use facecloud::morph::{make_toy_model, synthesize};
use facecloud::rng::stream;
use rand::Rng;

fn d2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn random_points(seed: u64, n: usize, extent: f64) -> Vec<Point3> {
    let mut rng = stream(seed, &[]);
    (0..n)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(-extent..extent)))
        .collect()
}

/// Max-min selection written directly from its definition: at every step,
/// scan all unselected points and recompute their distance to every selected
/// point.
fn fps_oracle(pts: &[Point3], nb: usize, seed: usize) -> Vec<usize> {
    let mut sel = vec![seed];
    while sel.len() < nb {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..pts.len() {
            if sel.contains(&j) {
                continue;
            }
            let m = sel.iter().map(|&s| d2(&pts[j], &pts[s])).fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(bm, _)| m > bm) {
                best = Some((m, j));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

fn dfps_oracle(pts: &[Point3], eig: &[f64], nose: Point3, nb: usize, r: f64, p: f64) -> Vec<usize> {
    let weight = |j: usize| {
        if d2(&pts[j], &nose) <= r * r {
            eig[j].clamp(EIGEN_EPS, 1.0).powf(p)
        } else {
            0.0
        }
    };
    let inside: Vec<usize> = (0..pts.len()).filter(|&j| weight(j) > 0.0).collect();
    let first = *inside
        .iter()
        .min_by(|&&a, &&b| d2(&pts[a], &nose).partial_cmp(&d2(&pts[b], &nose)).unwrap().then(a.cmp(&b)))
        .unwrap();
    let mut sel = vec![first];
    while sel.len() < nb {
        let mut best: Option<(f64, usize)> = None;
        for &j in &inside {
            if sel.contains(&j) {
                continue;
            }
            let m = sel.iter().map(|&s| d2(&pts[j], &pts[s]).sqrt()).fold(f64::INFINITY, f64::min);
            let score = weight(j) * m;
            if best.map_or(true, |(bs, _)| score > bs) {
                best = Some((score, j));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

fn toy_face(n: usize) -> PointCloud {
    let model = make_toy_model(n, 2, 2, 3).unwrap();
    let face = synthesize(&model, &[0.7, -0.4], &[0.2, 0.5]).unwrap();
    estimate_normals(&face, Neighborhood::Knn(16)).unwrap().0
}

#[test]
fn radius_query_matches_linear_scan() {
    let pts = random_points(1, 100, 30.0);
    let index = SpatialIndex::build(&pts).unwrap();
    for c in &pts {
        let got: Vec<usize> = index.radius_neighbors(c, 10.0).iter().map(|n| n.index).collect();
        let mut want: Vec<usize> = (0..pts.len()).filter(|&j| d2(&pts[j], c) <= 100.0).collect();
        want.sort_by(|&a, &b| d2(&pts[a], c).partial_cmp(&d2(&pts[b], c)).unwrap().then(a.cmp(&b)));
        assert_eq!(got, want);
    }
}

#[test]
fn cube_corner_neighbors() {
    let mut pts = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                pts.push([x as f64, y as f64, z as f64]);
            }
        }
    }
    let index = SpatialIndex::build(&pts).unwrap();
    let mut hits: Vec<usize> = index.radius_neighbors(&pts[0], 1.05).iter().map(|n| n.index).collect();
    hits.sort();
    // corner (0,0,0) and the three points one edge away: (0,0,1), (0,1,0), (1,0,0)
    assert_eq!(hits, vec![0, 1, 2, 4]);
}

#[test]
fn collinear_ball_query_pads_with_nearest() {
    let pts: Vec<Point3> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
    let index = SpatialIndex::build(&pts).unwrap();
    let hits: Vec<usize> = ball_query(&index, &pts[0], 2.5, 8).iter().map(|h| h.index).collect();
    assert_eq!(hits, vec![0, 1, 2, 0, 0, 0, 0, 0]);
}

#[test]
fn first_layer_offsets_stay_inside_radius() {
    let face = toy_face(3000);
    let index = SpatialIndex::with_cell_size(&face.points, 4.0).unwrap();
    let centers = fps(&face.points, 256, 0).unwrap();
    for c in centers {
        for h in ball_query(&index, &face.points[c], 4.0, 24) {
            let n = (h.offset[0].powi(2) + h.offset[1].powi(2) + h.offset[2].powi(2)).sqrt();
            assert!(n <= 4.0 + 1e-12, "{n}");
        }
    }
}

#[test]
fn plane_normals_are_exact() {
    let n = [1.0, 1.0, 1.0].map(|v: f64| v / 3f64.sqrt());
    // orthonormal in-plane basis
    let u = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let w = [n[1] * u[2] - n[2] * u[1], n[2] * u[0] - n[0] * u[2], n[0] * u[1] - n[1] * u[0]];
    let mut rng = stream(2, &[]);
    let pts: Vec<Point3> = (0..400)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            [0, 1, 2].map(|i| a * u[i] + b * w[i])
        })
        .collect();
    let (out, diag) = estimate_normals(&PointCloud::new(pts), Neighborhood::Knn(16)).unwrap();
    assert_eq!(diag.degenerate, 0);
    for (m, e) in out.normals.unwrap().iter().zip(out.eigenvalues.unwrap()) {
        for i in 0..3 {
            assert!((m[i] - n[i]).abs() < 1e-6, "{m:?}");
        }
        assert_eq!(e, EIGEN_EPS);
    }
}

#[test]
fn sphere_normals_within_two_degrees() {
    let r = 50.0;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let pts: Vec<Point3> = (0..2000)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / 2000.0;
            let s = (1.0 - z * z).sqrt();
            let t = i as f64 * golden;
            [r * s * t.cos(), r * s * t.sin(), r * z]
        })
        .collect();
    let (out, _) = estimate_normals(&PointCloud::new(pts.clone()), Neighborhood::Knn(16)).unwrap();
    let mut angles: Vec<f64> = pts
        .iter()
        .zip(out.normals.unwrap())
        .map(|(p, m)| {
            let c = (p[0] * m[0] + p[1] * m[1] + p[2] * m[2]).abs() / r;
            c.min(1.0).acos().to_degrees()
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    assert!(angles[(0.95 * 2000.0) as usize] < 2.0);
    assert!(angles[1999] < 2.0, "worst {}", angles[1999]);
}

#[test]
fn square_corners() {
    let pts = vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [10.0, 10.0, 0.0]];
    assert_eq!(fps(&pts, 3, 0).unwrap(), vec![0, 3, 1]);
}

#[test]
fn fps_matches_oracle_on_random_points() {
    for seed in 0..5 {
        let pts = random_points(10 + seed, 1000, 50.0);
        assert_eq!(fps(&pts, 32, 0).unwrap(), fps_oracle(&pts, 32, 0));
    }
}

#[test]
fn dfps_matches_oracle() {
    let mut rng = stream(3, &[]);
    for trial in 0..20 {
        let pts = random_points(100 + trial, 200, 60.0);
        let eig: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..0.4)).collect();
        for p in [-0.2, 0.2] {
            let got = dfps_resolved(&pts, &eig, [0.0; 3], 24, 65.0, p, None).unwrap();
            assert_eq!(got, dfps_oracle(&pts, &eig, [0.0; 3], 24, 65.0, p));
        }
    }
}

#[test]
fn dfps_respects_evaluation_radius_on_a_face() {
    let face = toy_face(4000);
    let nose = face.nose_tip.unwrap();
    let sel = dfps(&face, 1024, &SamplingParams::fixed(65.0, 0.0), &mut stream(0, &[])).unwrap();
    assert_eq!(sel.len(), 1024);
    for j in sel {
        assert!(d2(&face.points[j], &nose) <= 65.0 * 65.0);
    }
}

#[test]
fn kernels_are_deterministic() {
    let face = toy_face(2500);
    let params = SamplingParams::dithered(Default::default());
    let a = dfps(&face, 300, &params, &mut stream(9, &[1])).unwrap();
    let b = dfps(&face, 300, &params, &mut stream(9, &[1])).unwrap();
    assert_eq!(a, b);
    let n1 = estimate_normals(&face, Neighborhood::Radius(6.0)).unwrap();
    let n2 = estimate_normals(&face, Neighborhood::Radius(6.0)).unwrap();
    assert_eq!(n1, n2);
}
