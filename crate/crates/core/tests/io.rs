use pseudomask::tensorio::{
    decode_rle, encode_rle, read_jsonl, read_png, read_tensor, write_jsonl, write_png,
    write_tensor, AnnotationRecord, TensorError,
};
use pseudomask::{FeatureMap, Grid, ImageRgb, Mask, TensorFile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_tensors_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let rank = rng.random_range(2..=3);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=16)).collect();
        let len = shape.iter().product();
        let data: Vec<f32> = (0..len).map(|_| rng.random_range(-1e3..1e3)).collect();
        let t = TensorFile::new(shape, data).unwrap();
        let path = dir.path().join(format!("{i}.npy"));
        write_tensor(&t, &path).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), t);
    }
}

#[test]
fn full_size_feature_tensor_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (c, h, w) = (128, 120, 120);
    let features = FeatureMap::from_vec(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.random::<f32>()).collect(),
    )
    .unwrap();
    let path = dir.path().join("features.npy");
    write_tensor(&TensorFile::from_features(&features), &path).unwrap();
    let back = read_tensor(&path).unwrap();
    assert_eq!(back.shape(), &[c, h, w]);
    assert_eq!(back.to_features::<f32>().unwrap(), features);
}

#[test]
fn grids_survive_the_f32_file_format() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::from_fn(7, 5, |r, c| (r * 5 + c) as f64 / 34.0);
    let path = dir.path().join("depth.npy");
    write_tensor(&TensorFile::from_grid(&g), &path).unwrap();
    let back: Grid<f64> = read_tensor(&path).unwrap().to_grid().unwrap();
    assert_eq!(back.dims(), (7, 5));
    for (a, b) in back.as_slice().iter().zip(g.as_slice()) {
        assert!((a - b).abs() <= 1e-7);
    }
}

#[test]
fn float64_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = TensorFile::new(vec![1, 2], vec![0.0, 1.0])
        .unwrap()
        .to_npy_bytes();
    let at = bytes.windows(3).position(|w| w == b"<f4").unwrap();
    bytes[at + 2] = b'8';
    let path = dir.path().join("f8.npy");
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        read_tensor(&path),
        Err(TensorError::UnsupportedDtype(_))
    ));
}

#[test]
fn random_masks_round_trip_through_rle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let (h, w) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let density = rng.random::<f64>();
        let m = Mask::from_fn(h, w, |_, _| rng.random_bool(density));
        let rle = encode_rle(&m).unwrap();
        assert_eq!(rle.area(), m.count() as u64);
        assert_eq!(decode_rle(&rle).unwrap(), m);
    }
}

#[test]
fn eight_bit_images_round_trip_through_png() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = ImageRgb::from_fn(9, 13, |_, _| {
        std::array::from_fn(|_| rng.random_range(0..=255u8) as f64 / 255.0)
    });
    let path = dir.path().join("img.png");
    write_png(&img, &path).unwrap();
    let back: ImageRgb<f64> = read_png(&path).unwrap();
    assert_eq!(back.dims(), (9, 13));
    for (a, b) in back.pixels().iter().zip(img.pixels()) {
        for ch in 0..3 {
            assert!((a[ch] - b[ch]).abs() <= 1e-12);
        }
    }
}

#[test]
fn annotation_records_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let mask = Mask::from_fn(6, 4, |r, c| r > 1 && c < 3);
    let rows = vec![
        AnnotationRecord {
            image_id: "a".into(),
            instance_index: 0,
            mask: encode_rle(&mask).unwrap(),
            bbox: mask.bbox(),
            mean_confidence: 0.75,
            confidence_map_path: "confidence/a_0.npy".into(),
        };
        3
    ];
    let path = dir.path().join("rows.jsonl");
    write_jsonl(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    let back: Vec<AnnotationRecord> = read_jsonl(&path).unwrap();
    assert_eq!(back, rows);
}
