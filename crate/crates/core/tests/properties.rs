use egoflow_core::codec::{read_flo, read_kitti_flow_png, write_flo, write_kitti_flow_png, colorwheel_encode};
use egoflow_core::vmt::build_vmt_composed;
use egoflow_core::{
    build_vmt, decompose_vmt, ego_field, rotational_field, translational_field, CameraIntrinsics, DepthModel,
    EgoMotion, FlowImage, MotionField, Normalization,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
    (1usize..24, 1usize..16, 50.0..900.0f64, 0.8..1.25f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(
        |(w, h, fx, aspect, px, py)| {
            CameraIntrinsics::new(fx, fx * aspect, px * w as f64, py * h as f64, w, h).unwrap()
        },
    )
}

fn vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    [-scale..scale, -scale..scale, -scale..scale].prop_map(Vector3::from)
}

fn field(max_w: usize, max_h: usize) -> impl Strategy<Value = MotionField> {
    (1..max_w, 1..max_h).prop_flat_map(|(w, h)| {
        (prop::collection::vec(-300.0..300.0f64, w * h), prop::collection::vec(-300.0..300.0f64, w * h))
            .prop_map(move |(u, v)| MotionField::new(w, h, u, v).unwrap())
    })
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_is_linear(intr in intrinsics(), w1 in vec3(0.05), w2 in vec3(0.05), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let lhs = rotational_field(&intr, &(w1 * a + w2 * b)).unwrap();
        let f1 = rotational_field(&intr, &w1).unwrap();
        let f2 = rotational_field(&intr, &w2).unwrap();
        for i in 0..lhs.len() {
            let su = f1.u()[i].abs() * a.abs() + f2.u()[i].abs() * b.abs();
            let sv = f1.v()[i].abs() * a.abs() + f2.v()[i].abs() * b.abs();
            prop_assert!(close(lhs.u()[i], a * f1.u()[i] + b * f2.u()[i], su));
            prop_assert!(close(lhs.v()[i], a * f1.v()[i] + b * f2.v()[i], sv));
        }
    }

    #[test]
    fn translation_is_linear(intr in intrinsics(), t1 in vec3(1.0), t2 in vec3(1.0), a in -3.0..3.0f64, z in 0.5..80.0f64) {
        let depth = DepthModel::constant(z).unwrap();
        let lhs = translational_field(&intr, &(t1 * a + t2), &depth).unwrap();
        let f1 = translational_field(&intr, &t1, &depth).unwrap();
        let f2 = translational_field(&intr, &t2, &depth).unwrap();
        for i in 0..lhs.len() {
            let su = f1.u()[i].abs() * a.abs() + f2.u()[i].abs();
            let sv = f1.v()[i].abs() * a.abs() + f2.v()[i].abs();
            prop_assert!(close(lhs.u()[i], a * f1.u()[i] + f2.u()[i], su));
            prop_assert!(close(lhs.v()[i], a * f1.v()[i] + f2.v()[i], sv));
        }
    }

    #[test]
    fn negating_motion_negates_field(intr in intrinsics(), w in vec3(0.05), t in vec3(1.0), z in 0.5..80.0f64) {
        let depth = DepthModel::constant(z).unwrap();
        let rot = rotational_field(&intr, &w).unwrap();
        let neg = rotational_field(&intr, &-w).unwrap();
        prop_assert_eq!(neg, rot.map(|u, v| (-u + 0.0, -v + 0.0)));
        let tr = translational_field(&intr, &t, &depth).unwrap();
        let neg = translational_field(&intr, &-t, &depth).unwrap();
        prop_assert_eq!(neg, tr.map(|u, v| (-u + 0.0, -v + 0.0)));
    }

    #[test]
    fn forward_motion_expands(intr in intrinsics(), tz in 0.01..1.0f64, z in 0.5..80.0f64) {
        let f = translational_field(&intr, &Vector3::new(0.0, 0.0, tz), &DepthModel::constant(z).unwrap()).unwrap();
        for row in 0..intr.height() {
            for col in 0..intr.width() {
                let (x, _) = intr.centered(col, row);
                let (u, _) = f.at(col, row);
                prop_assert!(u.signum() == x.signum() || x == 0.0 && u == 0.0);
            }
        }
    }

    #[test]
    fn doubling_depth_halves_translation(intr in intrinsics(), t in vec3(1.0), z in 0.5..80.0f64) {
        let near = translational_field(&intr, &t, &DepthModel::constant(z).unwrap()).unwrap();
        let far = translational_field(&intr, &t, &DepthModel::constant(2.0 * z).unwrap()).unwrap();
        prop_assert_eq!(far, near.map(|u, v| (u / 2.0, v / 2.0)));
    }

    #[test]
    fn rotation_part_ignores_depth(intr in intrinsics(), w in vec3(0.05), z1 in 0.5..80.0f64, z2 in 0.5..80.0f64) {
        let ego = EgoMotion::from_vectors(w, Vector3::zeros()).unwrap();
        let a = ego_field(&intr, &ego, &DepthModel::constant(z1).unwrap()).unwrap();
        let b = ego_field(&intr, &ego, &DepthModel::constant(z2).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, rotational_field(&intr, &w).unwrap());
    }

    #[test]
    fn components_sum_to_the_full_field(intr in intrinsics(), w in vec3(0.05), t in vec3(1.0), z in 0.5..80.0f64) {
        let ego = EgoMotion::from_vectors(w, t).unwrap();
        let depth = DepthModel::constant(z).unwrap();
        let d = decompose_vmt(&intr, &ego, &depth, Normalization::PerFrameMax).unwrap();
        prop_assert_eq!(d.sum(), ego_field(&intr, &ego, &depth).unwrap());
    }

    #[test]
    fn fused_vmt_equals_composition(intr in intrinsics(), w in vec3(0.05), t in vec3(1.0), z in 0.5..80.0f64, s in 0.1..50.0f64) {
        let ego = EgoMotion::from_vectors(w, t).unwrap();
        let depth = DepthModel::constant(z).unwrap();
        for norm in [Normalization::PerFrameMax, Normalization::Fixed(s)] {
            prop_assert_eq!(
                build_vmt(&intr, &ego, &depth, norm).unwrap(),
                build_vmt_composed(&intr, &ego, &depth, norm).unwrap()
            );
        }
    }

    #[test]
    fn flo_round_trip_is_bit_exact(f in field(20, 12)) {
        // .flo stores 32-bit floats; start from representable values
        let f = f.map(|u, v| (u as f32 as f64, v as f32 as f64));
        let bytes = write_flo(&FlowImage::dense(f.clone())).unwrap();
        let back = read_flo(&bytes).unwrap();
        prop_assert_eq!(back.field(), &f);
        prop_assert_eq!(write_flo(&back).unwrap(), bytes);
    }

    #[test]
    fn kitti_png_round_trip(f in field(20, 12), seed in any::<u64>()) {
        let valid: Vec<bool> = (0..f.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let flow = FlowImage::with_validity(f.clone(), valid.clone()).unwrap();
        let back = read_kitti_flow_png(&write_kitti_flow_png(&flow).unwrap()).unwrap();
        prop_assert_eq!(back.validity().unwrap(), &valid[..]);
        for i in 0..f.len() {
            let (u, v) = (back.field().u()[i], back.field().v()[i]);
            if valid[i] {
                prop_assert!((u - f.u()[i]).abs() <= 1.0 / 128.0 && (v - f.v()[i]).abs() <= 1.0 / 128.0);
            } else {
                prop_assert_eq!((u, v), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn colorwheel_is_total(f in field(16, 10), s in 0.01..500.0f64) {
        for norm in [Normalization::PerFrameMax, Normalization::Fixed(s)] {
            let img = colorwheel_encode(&f, norm).unwrap();
            prop_assert_eq!(img.rgb().len(), f.len() * 3);
        }
    }
}

#[test]
fn colorwheel_handles_extreme_vectors() {
    let values = [0.0, -0.0, 1e-300, -1e-300, 1e300, -1e300, f64::MIN_POSITIVE, 3.5];
    let mut u = Vec::new();
    let mut v = Vec::new();
    for &a in &values {
        for &b in &values {
            u.push(a);
            v.push(b);
        }
    }
    let f = MotionField::new(values.len(), values.len(), u, v).unwrap();
    let img = colorwheel_encode(&f, Normalization::Fixed(1.0)).unwrap();
    assert_eq!(img.pixel(0, 0), [255, 255, 255]);
    assert_eq!(img.pixel(1, 1), [255, 255, 255]);
}
