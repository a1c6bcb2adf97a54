use facecloud::error::Error;
use facecloud::geometry::PointCloud;
use facecloud::io::{
    flags_of, from_bytes, import_ply_bytes, quantize, read_cloud, to_bytes, write_cloud, ImportOptions, NetworkPreset,
    RunConfig, HAS_LABELS, HAS_NORMALS, HAS_NOSE_TIP,
};
use facecloud::rng::stream;
use rand::Rng;

const MINIMAL: &str = "ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
end_header
0 0 0
1 0 0
0 1 0
";

#[test]
fn minimal_ascii_ply_becomes_bare_container() {
    let cloud = import_ply_bytes(MINIMAL.as_bytes(), &ImportOptions::default()).unwrap();
    let bytes = to_bytes(&cloud).unwrap();
    assert_eq!(&bytes[..4], b"S3PC");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0);
    assert_eq!(bytes.len(), 16 + 3 * 12);
}

#[test]
fn ply_normals_survive_conversion() {
    let text = "ply
format ascii 1.0
comment normals included
element vertex 2
property float x
property float y
property float z
property float nx
property float ny
property float nz
end_header
0.1 0.2 0.3 0 0 1
4 5 6 0.6 0.8 0
";
    let cloud = import_ply_bytes(text.as_bytes(), &ImportOptions::default()).unwrap();
    assert_eq!(flags_of(&cloud) & HAS_NORMALS, HAS_NORMALS);
    let back = from_bytes(&to_bytes(&cloud).unwrap()).unwrap();
    let n = back.normals.unwrap();
    assert_eq!(n[1], [0.6f32 as f64, 0.8f32 as f64, 0.0]);
    assert_eq!(back.points[0], [0.1f32 as f64, 0.2f32 as f64, 0.3f32 as f64]);
}

#[test]
fn binary_little_endian_ply() {
    let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
    for v in [1.5f32, -2.0, 3.25, 0.0, 0.5, 8.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let cloud = import_ply_bytes(&bytes, &ImportOptions::default()).unwrap();
    assert_eq!(cloud.points, vec![[1.5, -2.0, 3.25], [0.0, 0.5, 8.0]]);
}

#[test]
fn meter_input_scaled_to_millimeters() {
    let opts = ImportOptions { scale: 1000.0, ..ImportOptions::default() };
    let cloud = import_ply_bytes(MINIMAL.as_bytes(), &opts).unwrap();
    assert_eq!(cloud.points[1], [1000.0, 0.0, 0.0]);
    assert_eq!(cloud.points[2], [0.0, 1000.0, 0.0]);
}

#[test]
fn nose_tip_options() {
    let given = ImportOptions { nose_tip: Some([1.0, 2.0, 3.0]), ..ImportOptions::default() };
    assert_eq!(import_ply_bytes(MINIMAL.as_bytes(), &given).unwrap().nose_tip, Some([1.0, 2.0, 3.0]));
    assert_eq!(import_ply_bytes(MINIMAL.as_bytes(), &ImportOptions::default()).unwrap().nose_tip, None);
    let text = MINIMAL.replace("element vertex 3", "element vertex 4") + "0.2 0.2 9\n";
    let heuristic = ImportOptions { nose_heuristic: true, ..ImportOptions::default() };
    assert_eq!(import_ply_bytes(text.as_bytes(), &heuristic).unwrap().nose_tip, Some([0.2, 0.2, 9.0]));
}

#[test]
fn malformed_ply_is_reported() {
    let bad = MINIMAL.replace("0 1 0", "0 one 0");
    assert!(matches!(import_ply_bytes(bad.as_bytes(), &ImportOptions::default()), Err(Error::Parse { .. })));
    let no_z = MINIMAL.replace("property float z\n", "").replace("0 0 0\n1 0 0\n0 1 0\n", "0 0\n1 0\n0 1\n");
    assert!(import_ply_bytes(no_z.as_bytes(), &ImportOptions::default()).is_err());
    assert!(import_ply_bytes(b"not a ply", &ImportOptions::default()).is_err());
}

fn random_cloud(seed: u64) -> PointCloud {
    let mut rng = stream(seed, &[]);
    let n = rng.random_range(1..200);
    let mut c = PointCloud::new((0..n).map(|_| [0; 3].map(|_| rng.random_range(-100.0..100.0))).collect());
    c.normals = Some(
        (0..n)
            .map(|_| {
                let v = [0; 3].map(|_| rng.random_range(0.1..1.0f64));
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                v.map(|x| x / len)
            })
            .collect(),
    );
    c.eigenvalues = Some((0..n).map(|_| rng.random_range(0.0..0.33)).collect());
    c.nose_tip = Some([0.5, -1.0, 80.0]);
    c.id_label = Some(format!("id{seed}"));
    c.expr_label = if seed % 2 == 0 { Some("e003".into()) } else { None };
    c
}

#[test]
fn container_round_trip_is_identity_at_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let cloud = random_cloud(seed);
        let path = dir.path().join(format!("{seed}.s3pc"));
        write_cloud(&path, &cloud).unwrap();
        let back = read_cloud(&path).unwrap();
        assert_eq!(back, quantize(&cloud));
        assert_eq!(flags_of(&back) & (HAS_NOSE_TIP | HAS_LABELS), HAS_NOSE_TIP | HAS_LABELS);
        assert_eq!(to_bytes(&back).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn truncated_container_is_rejected() {
    let bytes = to_bytes(&random_cloud(3)).unwrap();
    for cut in [0, 3, 10, 16, bytes.len() - 1] {
        assert!(from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = RunConfig::default();
    cfg.seed = 17;
    cfg.train.epochs = 3;
    cfg.network.dropout = 0.25;
    cfg.dataset.generation.rotation_limits = [10.0, 5.0, 0.0];
    let text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn preset_then_overrides() {
    let cfg = RunConfig::from_toml("preset = \"micro\"\nseed = 4\n[train]\nepochs = 12\n").unwrap();
    assert_eq!(cfg.preset, NetworkPreset::Micro);
    assert_eq!(cfg.network.input_points(), 2048);
    assert_eq!(cfg.network.embedding_dim(), 128);
    assert_eq!((cfg.seed, cfg.train.epochs, cfg.train.batch_size), (4, 12, 32));
    assert!(RunConfig::from_toml("[train]\nepochs = 0\n").is_err());
    assert!(RunConfig::from_toml("seed = \"x\"\n").is_err());
}
