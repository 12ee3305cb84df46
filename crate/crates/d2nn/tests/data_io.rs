mod common;

use std::io::Write;
use std::path::PathBuf;

use d2nn::data::{load_idx, load_split, parse_idx_images, parse_idx_labels, to_idx, Split};
use d2nn::Error;
use flate2::write::GzEncoder;
use flate2::Compression;

fn data_root() -> PathBuf {
    std::env::var_os("D2NN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

#[test]
fn round_trips_plain_and_gzip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::synthetic(13, 1);
    let (images, labels) = to_idx(&ds);
    std::fs::write(dir.path().join("i"), &images).unwrap();
    std::fs::write(dir.path().join("l"), &labels).unwrap();
    assert_eq!(load_idx(dir.path().join("i"), dir.path().join("l")).unwrap(), ds);

    let gz = |bytes: &[u8]| {
        let mut e = GzEncoder::new(Vec::new(), Compression::default());
        e.write_all(bytes).unwrap();
        e.finish().unwrap()
    };
    std::fs::write(dir.path().join("i.gz"), gz(&images)).unwrap();
    std::fs::write(dir.path().join("l.gz"), gz(&labels)).unwrap();
    assert_eq!(load_idx(dir.path().join("i.gz"), dir.path().join("l.gz")).unwrap(), ds);
}

#[test]
fn header_is_big_endian() {
    // 2 images of 1x3, built byte by byte
    let bytes = [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3, 1, 2, 3, 4, 5, 6];
    let (n, rows, cols, px) = parse_idx_images(&bytes, "x".as_ref()).unwrap();
    assert_eq!((n, rows, cols), (2, 1, 3));
    assert_eq!(px, vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 1, 7], "y".as_ref()).unwrap(), vec![7]);
}

#[test]
fn corrupted_magic_names_offset() {
    let ds = common::synthetic(3, 2);
    let (mut images, _) = to_idx(&ds);
    images[3] = 0x04;
    match parse_idx_images(&images, "img".as_ref()) {
        Err(Error::Idx { offset, message, .. }) => {
            assert_eq!(offset, 0);
            assert!(message.contains("magic"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    // labels file handed in as images
    let (_, labels) = to_idx(&ds);
    assert!(matches!(parse_idx_images(&labels, "l".as_ref()), Err(Error::Idx { offset: 0, .. })));
}

#[test]
fn truncation_and_trailing_bytes() {
    let (images, labels) = to_idx(&common::synthetic(4, 3));
    match parse_idx_images(&images[..images.len() - 5], "img".as_ref()) {
        Err(Error::Idx { offset, .. }) => assert_eq!(offset, images.len() - 5),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(parse_idx_images(&images[..10], "img".as_ref()), Err(Error::Idx { offset: 8, .. })));
    let mut long = labels.clone();
    long.push(0);
    assert!(parse_idx_labels(&long, "l".as_ref()).is_err());
}

#[test]
fn label_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::synthetic(10, 4);
    let (images, _) = to_idx(&ds);
    let (_, labels) = to_idx(&ds.take(9));
    std::fs::write(dir.path().join("i"), images).unwrap();
    std::fs::write(dir.path().join("l"), labels).unwrap();
    let err = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap_err();
    assert!(matches!(err, Error::Dataset(ref m) if m.contains("10 images") && m.contains("9 labels")), "{err}");
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(load_idx("/nonexistent/a", "/nonexistent/b"), Err(Error::Io { .. })));
}

#[test]
fn emnist_letters_remap() {
    let mut ds = common::synthetic(30, 5);
    ds.labels = (0..30).map(|i| (i % 26 + 1) as u8).collect();
    let first = ds.emnist_first_ten();
    assert_eq!(first.len(), 10 + 4);
    assert!(first.labels.iter().all(|&l| l < 10));
    assert_eq!(first.labels[..10], [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    assert_eq!(first.image(0), ds.image(0));
}

#[test]
fn subsets_are_seeded() {
    let ds = common::synthetic(100, 6);
    let a = ds.sample_indices(10, 3);
    assert_eq!(a, ds.sample_indices(10, 3));
    assert_ne!(a, ds.sample_indices(10, 4));
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(ds.sample_indices(1000, 3).len(), 100);
}

#[test]
fn published_mnist_files() {
    let dir = data_root().join("mnist");
    if !dir.exists() {
        eprintln!("skipping: {} not present", dir.display());
        return;
    }
    let train = load_split(&dir, Split::Train).unwrap();
    let test = load_split(&dir, Split::Test).unwrap();
    assert_eq!((train.len(), train.rows, train.cols), (60_000, 28, 28));
    assert_eq!(test.len(), 10_000);
    train.check_classes(10).unwrap();
}
