use hybridnav::formats::{read_cloud, read_hover_log, read_map, write_cloud, write_hover_log, write_map};
use hybridnav_core::control::HoverSample;
use hybridnav_core::mapping::LocalMap;
use hybridnav_core::{Frame, Point3, PointCloud};
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn cloud_round_trips(pts in vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0, proptest::option::of(0.0f64..255.0), proptest::option::of(0u16..64)), 0..40)) {
        let points = pts
            .iter()
            .map(|&(x, y, z, i, r)| {
                let mut p = Point3::new(x, y, z);
                if let Some(i) = i {
                    p = p.with_intensity(i);
                }
                match r {
                    Some(r) if i.is_some() => p.with_ring(r),
                    _ => p,
                }
            })
            .collect();
        let cloud = PointCloud::from_points(points, Frame::Sensor, 1.5);
        let back = read_cloud(&write_cloud(&cloud), 1.5).unwrap();
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn map_round_trips(keys in vec((-30i64..30, -30i64..30, -3i64..5), 0..60), res in 0.05f64..1.0) {
        let mut map = LocalMap::new(res, 8.0);
        map.occupied.extend(keys);
        let back = read_map(&write_map(&map), 8.0).unwrap();
        prop_assert_eq!(back.occupied, map.occupied);
        prop_assert_eq!(back.resolution, map.resolution);
    }

    #[test]
    fn hover_log_round_trips(rows in vec((0.0f64..100.0, 0.0f64..1.0, 0.0f64..5.0), 1..50)) {
        let samples: Vec<HoverSample> =
            rows.iter().map(|&(t, thrust_fraction, altitude)| HoverSample { t, thrust_fraction, altitude }).collect();
        prop_assert_eq!(read_hover_log(&write_hover_log(&samples)).unwrap(), samples);
    }
}
