use egoflow_core::segment::{compensate, evaluate, threshold_segment};
use egoflow_core::synth::{make_suite, parallax_ambiguity_scene, render_flow, SceneSpec};
use egoflow_core::{ego_field, CameraIntrinsics, DepthModel, EgoMotion};

/// Worst ratio of oracle error to the allowed `2% * |field| + 0.05 px`.
fn worst_ratio(scenes: &[SceneSpec]) -> f64 {
    let mut worst = 0.0f64;
    for scene in scenes {
        let stat = scene.background_only();
        let depth = DepthModel::constant(stat.plane_depth().unwrap()).unwrap();
        let closed = ego_field(stat.intrinsics(), stat.ego(), &depth).unwrap();
        let (flow, _) = render_flow(&stat);
        for (i, ((u, v), (a, b))) in flow.field().iter().zip(closed.iter()).enumerate() {
            if flow.is_valid(i) {
                let err = ((u - a).powi(2) + (v - b).powi(2)).sqrt();
                worst = worst.max(err / (0.02 * (a * a + b * b).sqrt() + 0.05));
            }
        }
    }
    worst
}

#[test]
fn static_suites_match_closed_form() {
    for seed in [0, 1, 2, 42] {
        let ratio = worst_ratio(&make_suite(seed, 30).unwrap());
        assert!(ratio <= 1.0, "seed {seed}: error reaches {ratio:.3} of the tolerance");
    }
}

#[test]
fn true_depth_compensation_finds_every_mover() {
    for scene in make_suite(11, 20).unwrap() {
        let (observed, gt) = render_flow(&scene);
        let (predicted, _) = render_flow(&scene.frozen());
        let residual = compensate(&observed, predicted.field()).unwrap();
        let report = evaluate(&threshold_segment(&residual, 0.5).unwrap(), &gt).unwrap();
        assert_eq!(report.moving_iou, 1.0);
        assert_eq!(report.static_iou, 1.0);
    }
}

#[test]
fn moving_pixels_have_nonzero_true_depth_residual() {
    for scene in make_suite(5, 12).unwrap() {
        let (observed, gt) = render_flow(&scene);
        let (predicted, _) = render_flow(&scene.frozen());
        let residual = compensate(&observed, predicted.field()).unwrap();
        for (i, &moving) in gt.labels().iter().enumerate() {
            let (u, v) = (residual.field().u()[i], residual.field().v()[i]);
            assert_eq!(moving, u != 0.0 || v != 0.0, "pixel {i}");
        }
    }
}

#[test]
fn parallax_ambiguous_mover_is_missed_by_plane_compensation() {
    let intr = CameraIntrinsics::isotropic(186.0, 119.5, 18.5, 240, 72).unwrap();
    let ego = EgoMotion::new([0.0, 0.004, 0.0], [0.05, 0.0, 0.18]).unwrap();
    let depth = DepthModel::constant(20.0).unwrap();
    let scene = parallax_ambiguity_scene(intr, ego, depth.depth(), 8.0).unwrap();
    let (observed, gt) = render_flow(&scene);
    let plane = ego_field(&intr, &ego, &depth).unwrap();
    let residual = compensate(&observed, &plane).unwrap();
    let report = evaluate(&threshold_segment(&residual, 0.5).unwrap(), &gt).unwrap();
    assert!(gt.moving_count() > 0);
    assert!(report.moving_iou <= 0.1, "{report}");
}
