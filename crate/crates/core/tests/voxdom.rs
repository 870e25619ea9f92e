use lamelab_core::capacity::capacity;
use lamelab_core::fixtures::Fixture;
use lamelab_core::voxel::{Lattice, VoxelDomain};
use lamelab_core::LabError;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip_is_exact(
        dims in prop::array::uniform3(1usize..6),
        h in 1e-3f64..2.0,
        origin in prop::array::uniform3(-5.0f64..5.0),
        bits in prop::collection::vec(any::<bool>(), 216),
    ) {
        let lattice = Lattice::new(dims, h, origin).unwrap();
        let dom = VoxelDomain::new(lattice, bits[..lattice.len()].to_vec()).unwrap();
        let text = dom.to_voxdom();
        let back = VoxelDomain::parse_voxdom(&text).unwrap();
        prop_assert_eq!(&back, &dom);
        prop_assert_eq!(back.to_voxdom(), text);
    }
}

#[test]
fn layout_is_x_fastest_with_one_row_per_line() {
    let lattice = Lattice::new([3, 2, 1], 0.5, [0.0, 0.0, 0.0]).unwrap();
    let dom = VoxelDomain::new(lattice, vec![true, false, false, false, true, true]).unwrap();
    assert_eq!(
        dom.to_voxdom(),
        "voxdom v1\ndims 3 2 1\nspacing 0.5\norigin 0 0 0\n100\n011\n"
    );
}

#[test]
fn malformed_files_report_the_line() {
    let cases = [
        ("voxdom v2\n", 1),
        ("voxdom v1\ndims 2 1\n", 2),
        ("voxdom v1\ndims 2 1 1\nspacing -1\norigin 0 0 0\n10\n", 3),
        ("voxdom v1\ndims 2 1 1\nspacing 1\norigin 0 0 0\n1x\n", 5),
        ("voxdom v1\ndims 2 1 1\nspacing 1\norigin 0 0 0\n101\n", 5),
        ("voxdom v1\ndims 2 1 1\nspacing 1\norigin 0 0 0\n10\n11\n", 6),
    ];
    for (text, line) in cases {
        match VoxelDomain::parse_voxdom(text) {
            Err(LabError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(matches!(
        VoxelDomain::parse_voxdom("voxdom v1\ndims 2 1 1\nspacing 1\norigin 0 0 0\n"),
        Err(LabError::Parse { .. })
    ));
}

#[test]
fn all_open_file_has_empty_complement() {
    let dom = Fixture::Point.voxel_domain(4, 0.25);
    let parsed = VoxelDomain::parse_voxdom(&dom.to_voxdom()).unwrap();
    let k = parsed.complement_where(|_| true);
    assert!(k.is_empty());
    assert_eq!(capacity(&k, 1e-8).unwrap().value, 0.0);
}
