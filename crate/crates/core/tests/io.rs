use std::path::PathBuf;

use proptest::prelude::*;
use tractscope::geometry::Streamline;
use tractscope::io::tck::{parse_header, parse_tck, write_tck, TckError};
use tractscope::io::volume::{load_scalar, save_scalar, Grid, ScalarVolume};

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tck").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn empty_file_has_no_tracks() {
    assert!(parse_tck(&fixture("empty.tck")).unwrap().is_empty());
}

#[test]
fn single_track() {
    let tracks = parse_tck(&fixture("single.tck")).unwrap();
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].points(), &[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 4.0, 0.0]]);
    assert_eq!(tracks[0].arc_length(), 7.0);
}

#[test]
fn multi_track_lengths_and_values() {
    let bytes = fixture("multi.tck");
    let header = parse_header(&bytes).unwrap();
    assert_eq!(header.data_offset, 128);
    assert_eq!(header.declared_count, Some(3));
    let tracks = parse_tck(&bytes).unwrap();
    let lens: Vec<usize> = tracks.iter().map(Streamline::len).collect();
    assert_eq!(lens, [2, 3, 4]);
    assert_eq!(
        tracks[2].points(),
        &[[1.5, -2.25, 0.125], [1.5, -2.25, 1.125], [2.5, -2.25, 1.125], [2.5, -1.25, 1.125]]
    );
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(matches!(parse_tck(&fixture("truncated.tck")), Err(TckError::TruncatedStream { .. })));
    assert!(matches!(parse_tck(&fixture("bad_header.tck")), Err(TckError::MalformedHeader(_))));
    assert!(matches!(parse_tck(&fixture("bad_datatype.tck")), Err(TckError::UnsupportedDatatype(_))));
    assert_eq!(
        parse_tck(&fixture("count_mismatch.tck")),
        Err(TckError::CountMismatch { declared: 3, found: 1 })
    );
}

#[test]
fn arbitrary_prefixes_never_panic() {
    let bytes = fixture("multi.tck");
    for n in 0..bytes.len() {
        let _ = parse_tck(&bytes[..n]);
    }
}

fn f32_point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-500.0f32..500.0).prop_map(|p| p.map(f64::from))
}

proptest! {
    #[test]
    fn tck_round_trip_is_exact(tracks in prop::collection::vec(prop::collection::vec(f32_point(), 2..20), 0..12)) {
        let streamlines: Vec<Streamline> = tracks.into_iter().map(|p| Streamline::new(p).unwrap()).collect();
        let back = parse_tck(&write_tck(&streamlines)).unwrap();
        prop_assert_eq!(back, streamlines);
    }

    #[test]
    fn sampling_at_voxel_centers_is_exact(
        data in prop::collection::vec(-100.0f64..100.0, 4 * 3 * 5),
        i in 0usize..4, j in 0usize..3, k in 0usize..5,
        scale in 0.5f64..3.0, shift in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let mut affine = [0.0; 16];
        affine[0] = scale;
        affine[5] = scale;
        affine[10] = scale;
        affine[15] = 1.0;
        affine[3] = shift[0];
        affine[7] = shift[1];
        affine[11] = shift[2];
        let grid = Grid::new([4, 3, 5], [scale; 3], affine).unwrap();
        let p = grid.voxel_to_world([i as f64, j as f64, k as f64]);
        let vol = ScalarVolume::new(grid, data, "FA").unwrap();
        let s = vol.sample(p);
        prop_assert!(s.in_bounds);
        prop_assert!((s.value - vol.value(i, j, k)).abs() < 1e-9);
    }
}

#[test]
fn trilinear_midpoint_is_mean_of_corners() {
    let data: Vec<f64> = (0..8).map(f64::from).collect();
    let vol = ScalarVolume::new(Grid::identity([2, 2, 2]), data, "MD").unwrap();
    assert_eq!(vol.sample([0.5, 0.5, 0.5]).value, 3.5);
    assert_eq!(vol.sample([0.25, 0.0, 0.0]).value, 0.25);
    let out = vol.sample([1.5, 0.0, 0.0]);
    assert!(!out.in_bounds);
    assert_eq!(out.value, 0.0);
}

#[test]
fn scalar_volume_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fa.json");
    let data: Vec<f64> = (0..24).map(|v| f64::from(v as f32 * 0.125)).collect();
    let vol = ScalarVolume::new(Grid::identity([2, 3, 4]), data, "FA").unwrap();
    save_scalar(&path, &vol).unwrap();
    let back = load_scalar(&path).unwrap();
    assert_eq!(back.data(), vol.data());
    assert_eq!(back.grid(), vol.grid());
    assert_eq!(back.measure_name(), "FA");
}
