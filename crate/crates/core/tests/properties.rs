use facecloud::geometry::{
    ball_query, dfps, dfps_resolved, estimate_normals, fps, Neighborhood, Point3, PointCloud, SamplingParams,
    SpatialIndex, EIGEN_EPS,
};
use facecloud::io::{from_bytes, quantize, to_bytes};
use facecloud::metrics::{evaluate, identify, roc_curve, verification_loss, Embedding};
use facecloud::morph::{euler_rotation, make_toy_model, mix_expression, render_face, synthesize, GenParams, MorphableModel};
use facecloud::rng::stream;
use proptest::prelude::*;
use std::sync::OnceLock;

fn d2(a: &Point3, b: &Point3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn cloud_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(prop::array::uniform3(-50.0..50.0f64), min..max)
}

fn toy() -> &'static MorphableModel {
    static MODEL: OnceLock<MorphableModel> = OnceLock::new();
    MODEL.get_or_init(|| make_toy_model(400, 6, 6, 2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_selects_distinct_points_with_shrinking_gaps(pts in cloud_strategy(2, 150), frac in 0.0..1.0f64) {
        let nb = 1 + ((pts.len() - 1) as f64 * frac) as usize;
        let sel = fps(&pts, nb, 0).unwrap();
        prop_assert_eq!(sel.len(), nb);
        let mut sorted = sel.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), nb);
        let mut last = f64::INFINITY;
        for t in 1..sel.len() {
            let gap = sel[..t].iter().map(|&s| d2(&pts[sel[t]], &pts[s])).fold(f64::INFINITY, f64::min);
            prop_assert!(gap <= last);
            last = gap;
        }
    }

    #[test]
    fn dfps_stays_in_radius_and_reduces_to_fps(
        pts in cloud_strategy(20, 150),
        eig in prop::collection::vec(0.0..0.4f64, 150),
        r in 20.0..90.0f64,
        p in -0.2..0.2f64,
    ) {
        let nose = [0.0; 3];
        let eig = &eig[..pts.len()];
        let inside: Vec<usize> = (0..pts.len()).filter(|&j| d2(&pts[j], &nose) <= r * r).collect();
        prop_assume!(inside.len() >= 4);
        let nb = inside.len() / 2;
        let sel = dfps_resolved(&pts, eig, nose, nb, r, p, None).unwrap();
        prop_assert_eq!(sel.len(), nb);
        for &j in &sel {
            prop_assert!(d2(&pts[j], &nose) <= r * r);
        }
        let mut sorted = sel.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), nb);

        let flat = dfps_resolved(&pts, eig, nose, nb, r, 0.0, None).unwrap();
        let sub: Vec<Point3> = inside.iter().map(|&j| pts[j]).collect();
        let seed = (0..sub.len()).min_by(|&a, &b| d2(&sub[a], &nose).total_cmp(&d2(&sub[b], &nose))).unwrap();
        let plain: Vec<usize> = fps(&sub, nb, seed).unwrap().into_iter().map(|i| inside[i]).collect();
        prop_assert_eq!(flat, plain);
    }

    #[test]
    fn ball_query_equals_linear_scan(pts in cloud_strategy(1, 120), c in 0usize..120, r in 1.0..40.0f64, k in 1usize..20) {
        let center = pts[c % pts.len()];
        let index = SpatialIndex::with_cell_size(&pts, r).unwrap();
        let got: Vec<usize> = ball_query(&index, &center, r, k).iter().map(|h| h.index).collect();
        let mut want: Vec<usize> = (0..pts.len()).filter(|&j| d2(&pts[j], &center) <= r * r).collect();
        want.sort_by(|&a, &b| d2(&pts[a], &center).total_cmp(&d2(&pts[b], &center)).then(a.cmp(&b)));
        want.truncate(k);
        while want.len() < k {
            want.push(want[0]);
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn normal_field_is_well_formed(pts in cloud_strategy(20, 200)) {
        let (out, _) = estimate_normals(&PointCloud::new(pts), Neighborhood::Knn(8)).unwrap();
        for (n, e) in out.normals.unwrap().iter().zip(out.eigenvalues.unwrap()) {
            prop_assert!((EIGEN_EPS..=1.0).contains(&e));
            prop_assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
            prop_assert!(n[2] >= 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic(pts in cloud_strategy(40, 120), seed in any::<u64>()) {
        let mut cloud = PointCloud::new(pts);
        cloud.nose_tip = Some(cloud.points[0]);
        let (cloud, _) = estimate_normals(&cloud, Neighborhood::Knn(8)).unwrap();
        let params = SamplingParams::dithered(Default::default());
        let a = dfps(&cloud, 10, &params, &mut stream(seed, &[1]));
        let b = dfps(&cloud, 10, &params, &mut stream(seed, &[1]));
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn synthesis_is_affine(
        a1 in prop::collection::vec(-3.0..3.0f64, 6),
        a2 in prop::collection::vec(-3.0..3.0f64, 6),
        b1 in prop::collection::vec(-3.0..3.0f64, 6),
        b2 in prop::collection::vec(-3.0..3.0f64, 6),
        t in -2.0..2.0f64,
    ) {
        let m = toy();
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| t * a + (1.0 - t) * b).collect() };
        let s1 = synthesize(m, &a1, &b1).unwrap();
        let s2 = synthesize(m, &a2, &b2).unwrap();
        let sm = synthesize(m, &mix(&a1, &a2), &mix(&b1, &b2)).unwrap();
        for ((p, q), r) in sm.points.iter().zip(&s1.points).zip(&s2.points) {
            for i in 0..3 {
                prop_assert!((p[i] - (t * q[i] + (1.0 - t) * r[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn expression_mixing_endpoints(g in prop::collection::vec(-5.0..5.0f64, 1..20), seed in any::<u64>()) {
        let r: Vec<f64> = g.iter().map(|x| x * 0.5 - (seed % 7) as f64).collect();
        prop_assert_eq!(mix_expression(&g, &r, 0.0), r.clone());
        prop_assert_eq!(mix_expression(&g, &r, 1.0), g);
    }

    #[test]
    fn pose_change_is_rigid(yaw in -1.5..1.5f64, pitch in -1.5..1.5f64, roll in -1.5..1.5f64, seed in any::<u64>()) {
        let rot = euler_rotation(yaw, pitch, roll);
        prop_assert!((rot.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((rot.transpose() * rot - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
        let m = toy();
        let params = GenParams { sigma_delta: 0.0, rotation_limits: [20.0; 3], ..GenParams::default() };
        let alpha = vec![0.3; 6];
        let beta = vec![-0.2; 6];
        let posed = render_face(m, &params, &alpha, &beta, &mut stream(seed, &[])).unwrap();
        let plain = synthesize(m, &alpha, &beta).unwrap();
        for (i, j) in [(0, 1), (5, 200), (17, 399), (100, 300)] {
            let a = d2(&posed.points[i], &posed.points[j]).sqrt();
            let b = d2(&plain.points[i], &plain.points[j]).sqrt();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_is_the_pairwise_statistic(
        gen in prop::collection::vec(0u8..20, 1..30),
        imp in prop::collection::vec(0u8..20, 1..30),
    ) {
        let g: Vec<f64> = gen.iter().map(|&v| v as f64 / 20.0).collect();
        let i: Vec<f64> = imp.iter().map(|&v| v as f64 / 20.0).collect();
        let mut s = 0.0;
        for a in &g {
            for b in &i {
                s += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        let want = s / (g.len() * i.len()) as f64;
        prop_assert!((roc_curve(&g, &i, 1e-3).unwrap().auc - want).abs() < 1e-9);
    }

    #[test]
    fn rank_one_ignores_positive_scaling(
        vals in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 12),
        scales in prop::collection::vec(0.01..100.0f64, 12),
    ) {
        let make = |k: usize, s: f64| Embedding::labeled(vals[k].iter().map(|v| (v + 1e-3) * s).collect(), format!("id{}", k % 4)).unwrap();
        let gallery: Vec<Embedding> = (0..4).map(|k| make(k, 1.0)).collect();
        let probes: Vec<Embedding> = (4..12).map(|k| make(k, 1.0)).collect();
        let scaled: Vec<Embedding> = (4..12).map(|k| make(k, scales[k])).collect();
        let a = identify(&gallery, &probes).unwrap();
        let b = identify(&gallery, &scaled).unwrap();
        prop_assert_eq!(a.rr1, b.rr1);
    }

    #[test]
    fn evaluation_is_order_invariant_and_obeys_the_loss_identity(
        vals in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 15),
        shift in 0usize..15,
    ) {
        let emb: Vec<Embedding> = vals
            .iter()
            .enumerate()
            .map(|(k, v)| Embedding::labeled(v.iter().map(|x| x + 0.01).collect(), format!("id{}", k % 5)).unwrap())
            .collect();
        let gallery = &emb[..5];
        let probes = &emb[5..];
        let mut rotated = probes.to_vec();
        rotated.rotate_left(shift % probes.len());
        let mut reversed = gallery.to_vec();
        reversed.reverse();
        let (a, _) = evaluate(gallery, probes, 1e-3).unwrap();
        let (b, _) = evaluate(&reversed, &rotated, 1e-3).unwrap();
        prop_assert_eq!(a.rr1, b.rr1);
        prop_assert_eq!(a.auc, b.auc);
        prop_assert_eq!(a.vr_at_far, b.vr_at_far);
        prop_assert_eq!(a.verification_loss, verification_loss(a.vr_at_far, a.rr1, a.auc));
        prop_assert_eq!(b.verification_loss, verification_loss(b.vr_at_far, b.rr1, b.auc));
    }

    #[test]
    fn container_round_trip(pts in cloud_strategy(1, 80), with_normals in any::<bool>(), label in "[a-z0-9]{0,8}") {
        let mut cloud = PointCloud::new(pts.clone());
        if with_normals {
            let unit = |p: &Point3| {
                let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if len > 1e-3 { p.map(|x| x / len) } else { [0.0, 0.0, 1.0] }
            };
            cloud.normals = Some(pts.iter().map(unit).collect());
        }
        cloud.id_label = Some(label);
        let back = from_bytes(&to_bytes(&cloud).unwrap()).unwrap();
        prop_assert_eq!(back, quantize(&cloud));
    }
}
