use houghreg::cloud::PointCloud;
use houghreg::geometry::{RigidTransform, Vec3};
use houghreg::io::{self, CloudFormat};
use houghreg::matching::Correspondence;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f64> {
    (-1.0e6f32..1.0e6f32).prop_map(f64::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_cloud_payload_survives_save_and_load(pts in prop::collection::vec((finite_f32(), finite_f32(), finite_f32()), 0..200)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dhpc");
        let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect());
        io::save_cloud(&cloud, &path, CloudFormat::Binary).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let loaded = io::load_cloud(&path).unwrap();
        prop_assert_eq!(&loaded, &cloud);
        prop_assert_eq!(io::encode_cloud_binary(&loaded), bytes);
    }

    #[test]
    fn correspondence_payload_survives_save_and_load(rows in prop::collection::vec((any::<u32>(), any::<u32>(), -1.0f32..1.0), 0..200)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.dhcr");
        let corrs: Vec<_> = rows.iter().map(|&(s, d, w)| Correspondence::new(s, d, w.into())).collect();
        io::save_correspondences(&corrs, &path).unwrap();
        prop_assert_eq!(io::load_correspondences(&path).unwrap(), corrs);
    }

    #[test]
    fn transform_text_is_lossless(r in prop::array::uniform3(-3.0f64..3.0), t in prop::array::uniform3(-100.0f64..100.0)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        let tr = RigidTransform::from_axis_angle(&houghreg::AxisAngle(Vec3::from(r)), Vec3::from(t));
        io::save_transform(&tr, &path).unwrap();
        prop_assert_eq!(io::load_transform(&path).unwrap(), tr);
    }
}

#[test]
fn wrong_magic_is_rejected_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.dhcr");
    std::fs::write(&path, b"DHPC\0\0\0\0").unwrap();
    let err = io::load_correspondences(&path).unwrap_err().to_string();
    assert!(err.contains("byte 0"), "{err}");
}
