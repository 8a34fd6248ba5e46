//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Real KITTI raw data is read from the drive directory named by
//! `EGOFLOW_KITTI_RAW` (holding the calibration files and `oxts/`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use egoflow_core::codec::{
    colorwheel_encode, read_flo, read_kitti_flow_png, write_flo, write_kitti_flow_png, Normalization,
};
use egoflow_core::keyvalue::KeyValues;
use egoflow_core::kitti::{load_calib_dir, yaw_only, OxtsSequence};
use egoflow_core::synth::{make_suite, render_flow, SceneSpec};
use egoflow_core::{
    build_vmt, decompose_vmt, dominant_component, ego_field, rotational_field, translational_field,
    CameraIntrinsics, Component, DepthModel, EgoMotion, FlowImage, MotionField,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KITTI_RAW_ENV: &str = "EGOFLOW_KITTI_RAW";
const SUITE_SEED: u64 = 2024;
const SUITE_SIZE: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), notes: Vec::new() }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

fn egoflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_egoflow"))
        .args(args)
        .env_remove("EGOFLOW_THREADS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("egoflow runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn random_intrinsics(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CameraIntrinsics {
    let fx = rng.gen_range(200.0..1500.0);
    let fy = fx * rng.gen_range(0.9..1.1);
    let cx = w as f64 * rng.gen_range(0.4..0.6);
    let cy = h as f64 * rng.gen_range(0.4..0.6);
    CameraIntrinsics::new(fx, fy, cx, cy, w, h).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, max: f64) -> [f64; 3] {
    [rng.gen_range(-max..max), rng.gen_range(-max..max), rng.gen_range(-max..max)]
}

fn bits(f: &MotionField) -> Vec<u64> {
    f.u().iter().chain(f.v()).map(|x| x.to_bits()).collect()
}

/// Direct evaluation of the rotational and plane-induced translational field
/// at one pixel, returning each component and the sum of the absolute values
/// of its terms.
fn direct(intr: &CameraIntrinsics, w: [f64; 3], t: [f64; 3], z: f64, col: usize, row: usize) -> [(f64, f64); 4] {
    let (fx, fy) = (intr.fx(), intr.fy());
    let x = col as f64 - intr.cx();
    let y = row as f64 - intr.cy();
    let ru = [-w[1] * fx, w[2] * fx / fy * y, w[0] * x * y / fy, -w[1] * x * x / fx];
    let rv = [w[0] * fy, -w[2] * fy / fx * x, -w[1] * x * y / fx, w[0] * y * y / fy];
    let tu = [t[2] * x / z, -t[0] * fx / z];
    let tv = [t[2] * y / z, -t[1] * fy / z];
    let sum = |a: &[f64]| a.iter().sum::<f64>();
    let abs = |a: &[f64]| a.iter().map(|v| v.abs()).sum::<f64>();
    [(sum(&ru), abs(&ru)), (sum(&rv), abs(&rv)), (sum(&tu), abs(&tu)), (sum(&tv), abs(&tv))]
}

fn closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(8..96), rng.gen_range(8..64));
        let intr = random_intrinsics(&mut rng, w, h);
        let omega = random_vec(&mut rng, 0.05);
        let t = random_vec(&mut rng, 2.0);
        let z = rng.gen_range(1.0..100.0);
        let rot = rotational_field(&intr, &Vector3::from(omega)).unwrap();
        let trans = translational_field(&intr, &Vector3::from(t), &DepthModel::constant(z).unwrap()).unwrap();
        for _ in 0..20 {
            let (col, row) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let [ru, rv, tu, tv] = direct(&intr, omega, t, z, col, row);
            let (a, b) = rot.at(col, row);
            let (c, d) = trans.at(col, row);
            for (got, (want, scale)) in [(a, ru), (b, rv), (c, tu), (d, tv)] {
                let ulp = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
                worst = worst.max((got - want).abs() / ulp);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= 4.0 && secs < 10.0, format!("worst error {worst:.2} ulp of the term magnitude, {secs:.2} s"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut max_abs = 0.0f64;
    let scenes = make_suite(SUITE_SEED, SUITE_SIZE).unwrap();
    for scene in &scenes {
        let stat = scene.background_only();
        let depth = DepthModel::constant(stat.plane_depth().unwrap()).unwrap();
        let closed = ego_field(stat.intrinsics(), stat.ego(), &depth).unwrap();
        let (flow, _) = render_flow(&stat);
        for (i, ((u, v), (a, b))) in flow.field().iter().zip(closed.iter()).enumerate() {
            if flow.is_valid(i) {
                let err = (u - a).hypot(v - b);
                max_abs = max_abs.max(err);
                worst = worst.max(err / (0.02 * a.hypot(b) + 0.05));
            }
        }
    }
    Outcome::new(
        worst <= 1.0,
        format!("{} static scenes, max error {max_abs:.4} px, {:.0}% of the allowance", scenes.len(), worst * 100.0),
    )
}

fn depth_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut closed_ok = true;
    let mut oracle_diff = 0.0f64;
    for _ in 0..20 {
        let intr = random_intrinsics(&mut rng, 96, 40);
        let ego = EgoMotion::new(random_vec(&mut rng, 0.02), random_vec(&mut rng, 0.2)).unwrap();
        let rot_parts = |z: f64| {
            let d = decompose_vmt(&intr, &ego, &DepthModel::constant(z).unwrap(), Normalization::PerFrameMax).unwrap();
            [Component::RotationX, Component::RotationY, Component::RotationZ].map(|c| bits(d.field(c)))
        };
        let reference = rot_parts(1.0);
        closed_ok &= [10.0, 100.0].iter().all(|&z| rot_parts(z) == reference);

        let rotation_only = EgoMotion::new(random_vec(&mut rng, 0.02), [0.0; 3]).unwrap();
        let flows: Vec<FlowImage> = [5.0, 10.0, 50.0]
            .iter()
            .map(|&z| render_flow(&SceneSpec::plane(intr, rotation_only, z).unwrap()).0)
            .collect();
        for other in &flows[1..] {
            closed_ok &= other.validity() == flows[0].validity();
            for ((u, v), (a, b)) in other.field().iter().zip(flows[0].field().iter()) {
                oracle_diff = oracle_diff.max((u - a).abs().max((v - b).abs()));
            }
        }
    }
    Outcome::new(
        closed_ok && oracle_diff <= 1e-9,
        format!("closed-form rotation bit-identical at 1/10/100 m: {closed_ok}; oracle max difference at 5/10/50 m {oracle_diff:.1e} px"),
    )
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sums, mut yaws) = (0, 0);
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(16..120), rng.gen_range(8..60));
        let intr = random_intrinsics(&mut rng, w, h);
        let depth = DepthModel::constant(rng.gen_range(2.0..60.0)).unwrap();
        let ego = EgoMotion::new(random_vec(&mut rng, 0.03), random_vec(&mut rng, 1.5)).unwrap();
        let d = decompose_vmt(&intr, &ego, &depth, Normalization::PerFrameMax).unwrap();
        sums += usize::from(bits(&d.sum()) == bits(&ego_field(&intr, &ego, &depth).unwrap()));

        let [_, wy, _, tx, ty, tz] = ego.parameters();
        let planar = EgoMotion::new([0.0, wy, 0.0], [tx, ty, tz]).unwrap();
        let yaw = yaw_only(&planar);
        let same_field = bits(&ego_field(&intr, &yaw, &depth).unwrap()) == bits(&ego_field(&intr, &planar, &depth).unwrap());
        let same_image = build_vmt(&intr, &yaw, &depth, Normalization::PerFrameMax).unwrap()
            == build_vmt(&intr, &planar, &depth, Normalization::PerFrameMax).unwrap();
        yaws += usize::from(same_field && same_image);
    }
    Outcome::new(sums == 100 && yaws == 100, format!("bit-exact sums {sums}/100, yaw-only identical {yaws}/100"))
}

fn random_field(rng: &mut ChaCha8Rng, max: f64) -> MotionField {
    let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
    MotionField::from_fn(w, h, |_, _| (rng.gen_range(-max..max), rng.gen_range(-max..max)))
}

fn codecs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut flo_ok = 0;
    let mut png_err = 0.0f64;
    let mut validity_ok = true;
    for _ in 0..100 {
        // .flo stores f32, so draw values it can hold exactly
        let flow = FlowImage::dense(random_field(&mut rng, 300.0).map(|u, v| (u as f32 as f64, v as f32 as f64)));
        let bytes = write_flo(&flow).unwrap();
        let back = read_flo(&bytes).unwrap();
        flo_ok += usize::from(bits(back.field()) == bits(flow.field()) && write_flo(&back).unwrap() == bytes);

        let field = random_field(&mut rng, 500.0);
        let valid: Vec<bool> = (0..field.len()).map(|_| rng.gen_bool(0.8)).collect();
        let flow = FlowImage::with_validity(field, valid.clone()).unwrap();
        let back = read_kitti_flow_png(&write_kitti_flow_png(&flow).unwrap()).unwrap();
        validity_ok &= (0..valid.len()).all(|i| back.is_valid(i) == valid[i]);
        for (i, ((u, v), (a, b))) in back.field().iter().zip(flow.field().iter()).enumerate() {
            if valid[i] {
                png_err = png_err.max((u - a).abs().max((v - b).abs()));
            }
        }
    }
    let zero = colorwheel_encode(&MotionField::zeros(4, 3), Normalization::PerFrameMax).unwrap();
    let white = zero.pixels().all(|p| p == [255, 255, 255]);
    let mut extremes_ok = true;
    for scale in [1e-300, 1e-3, 1.0, 1e3, 1e300] {
        let field = random_field(&mut rng, 1.0).map(|u, v| (u * scale, v * scale));
        for norm in [Normalization::PerFrameMax, Normalization::Fixed(1.0), Normalization::Fixed(1e-6)] {
            extremes_ok &= colorwheel_encode(&field, norm).is_ok();
        }
    }
    let pass = flo_ok == 100 && png_err <= 1.0 / 64.0 && validity_ok && white && extremes_ok;
    Outcome::new(
        pass,
        format!(
            ".flo bit-exact {flo_ok}/100, KITTI PNG max error {png_err:.5} px, validity exact {validity_ok}, zero is white {white}, encodes extremes {extremes_ok}"
        ),
    )
}

fn read_kv(path: &Path) -> KeyValues {
    KeyValues::parse(&std::fs::read_to_string(path).unwrap_or_default()).unwrap_or_default()
}

fn kv_f64(kv: &KeyValues, key: &str) -> Option<f64> {
    kv.get(key).and_then(|v| v.parse().ok())
}

fn end_to_end(suite: &Path, work: &Path) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for i in 0..SUITE_SIZE {
        let scene = suite.join(format!("scene_{i:04}"));
        let out = work.join(format!("seg_{i:04}"));
        let run = egoflow(&[
            "segment", "--flow", s(&scene.join("flow")), "--predicted", s(&scene.join("rigid")),
            "--gt", s(&scene.join("gt")), "--tau", "0.5", "--out", s(&out),
        ]);
        let iou = kv_f64(&read_kv(&out.join("report.kv")), "total.moving_iou");
        match (run.status.success(), iou) {
            (true, Some(iou)) => {
                worst = worst.min(iou);
                if iou < 0.95 {
                    failures.push(format!("scene {i}: {iou:.3}"));
                }
            }
            _ => failures.push(format!("scene {i}: segment failed: {}", String::from_utf8_lossy(&run.stderr).trim())),
        }
    }

    let parallax = suite.join("parallax");
    let text = std::fs::read_to_string(parallax.join("scene.txt")).unwrap_or_default();
    let depth = SceneSpec::parse(&text).ok().and_then(|sc| sc.plane_depth());
    let out = work.join("seg_parallax");
    let parallax_iou = depth.and_then(|z| {
        let run = egoflow(&[
            "segment", "--flow", s(&parallax.join("flow")), "--calib", s(&parallax), "--oxts", s(&parallax.join("oxts")),
            "--gt", s(&parallax.join("gt")), "--depth", &z.to_string(), "--tau", "0.5", "--out", s(&out),
        ]);
        run.status.success().then(|| kv_f64(&read_kv(&out.join("report.kv")), "total.moving_iou")).flatten()
    });
    let parallax_ok = parallax_iou.is_some_and(|v| v <= 0.1);
    let mut outcome = Outcome::new(
        failures.is_empty() && parallax_ok,
        format!(
            "worst moving IoU {worst:.3} over {SUITE_SIZE} scenes, parallax scene moving IoU {}",
            parallax_iou.map_or("unavailable".into(), |v| format!("{v:.3}"))
        ),
    )
    .note("documented limitation: motion-parallax ambiguity, a mover whose flow matches the plane model is invisible to plane compensation");
    for f in failures {
        outcome = outcome.note(f);
    }
    outcome
}

/// Straight frames need z-dominant translation, the sharpest turn needs a
/// rotation-y dominant decomposition.
fn check_drive(dir: &Path) -> Result<String, String> {
    let calib = load_calib_dir(dir, 2).map_err(|e| format!("calibration: {e}"))?;
    let seq = OxtsSequence::load(&dir.join("oxts")).map_err(|e| format!("oxts: {e}"))?;
    if seq.len() < 20 {
        return Err(format!("only {} OXTS frames", seq.len()));
    }
    let egos: Vec<EgoMotion> = (1..seq.len())
        .map(|t| seq.egomotion(t, &calib.imu_to_cam))
        .collect::<Result<_, _>>()
        .map_err(|e| format!("egomotion: {e}"))?;
    let mut straight = 0;
    for (t, e) in egos.iter().enumerate() {
        let (w, tr) = (e.omega(), e.translation());
        if w.y.abs() < 0.002 && tr.norm() > 0.05 {
            straight += 1;
            if !(tr.z.abs() > tr.x.abs() && tr.z.abs() > tr.y.abs()) {
                return Err(format!("straight frame {} has translation {:?}", t + 1, tr.as_slice()));
            }
        }
    }
    if straight == 0 {
        return Err("no straight-driving frame".into());
    }
    let (turn, ego) = egos
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.omega().y.abs().total_cmp(&b.1.omega().y.abs()))
        .unwrap();
    let d = decompose_vmt(&calib.intrinsics, ego, &DepthModel::default(), Normalization::PerFrameMax)
        .map_err(|e| e.to_string())?;
    let dom = dominant_component(&d);
    if dom.dominant != Some(Component::RotationY) {
        return Err(format!("turning frame {} is dominated by {:?}", turn + 1, dom.dominant));
    }
    Ok(format!(
        "{} frames, {straight} straight frames z-dominant, turning frame {} rot_y share {:.2}",
        seq.len(),
        turn + 1,
        dom.fraction(Component::RotationY)
    ))
}

fn kitti_sanity() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synthetic_drive");
    let synthetic = match check_drive(&fixture) {
        Ok(m) => format!("synthetic stand-in drive (not real data) passes: {m}"),
        Err(e) => format!("synthetic stand-in drive (not real data) fails: {e}"),
    };
    let outcome = match std::env::var_os(KITTI_RAW_ENV) {
        None => Outcome::new(false, format!("no real KITTI raw segment available; set {KITTI_RAW_ENV} to a drive directory")),
        Some(dir) => match check_drive(Path::new(&dir)) {
            Ok(m) => Outcome::new(true, format!("real drive {}: {m}", PathBuf::from(&dir).display())),
            Err(e) => Outcome::new(false, format!("real drive {}: {e}", PathBuf::from(&dir).display())),
        },
    };
    outcome.note(synthetic)
}

fn performance() -> Outcome {
    match egoflow_cli::bench::measure(1224, 256, 200, 10) {
        Ok(st) => Outcome::new(
            st.p95_ms <= 5.0,
            format!("build_vmt 1224x256 single-threaded: p50 {:.2} ms, p95 {:.2} ms (budget 5 ms)", st.p50_ms, st.p95_ms),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(suite: &Path, work: &Path) -> Outcome {
    let drive = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/synthetic_drive");
    let merged = work.join("merged");
    for (sub, ext) in [("flow", "png"), ("rigid", "png"), ("gt", "png")] {
        std::fs::create_dir_all(merged.join(sub)).unwrap();
        for i in 0..10 {
            let from = suite.join(format!("scene_{i:04}")).join(sub).join("0000000001.png");
            std::fs::copy(from, merged.join(sub).join(format!("{:010}.{ext}", i + 1))).unwrap();
        }
    }
    let mut trees: Vec<(String, BTreeMap<PathBuf, Vec<u8>>)> = Vec::new();
    let mut failures = Vec::new();
    for (run, threads) in [(0, "1"), (1, "4"), (2, "4"), (3, "1")] {
        let vmt_out = work.join(format!("det_vmt_{run}"));
        let seg_out = work.join(format!("det_seg_{run}"));
        let a = egoflow(&["--threads", threads, "vmt", "--calib", s(&drive), "--oxts", s(&drive.join("oxts")), "--out", s(&vmt_out), "--planes"]);
        let b = egoflow(&[
            "--threads", threads, "segment", "--flow", s(&merged.join("flow")), "--predicted", s(&merged.join("rigid")),
            "--gt", s(&merged.join("gt")), "--out", s(&seg_out),
        ]);
        if !(a.status.success() && b.status.success()) {
            failures.push(format!("run {run} failed"));
        }
        trees.push((format!("vmt@{threads}"), tree(&vmt_out)));
        trees.push((format!("segment@{threads}"), tree(&seg_out)));
    }
    let (vmt, seg): (Vec<_>, Vec<_>) = trees.iter().partition(|(n, _)| n.starts_with("vmt"));
    let same = |group: &[&(String, BTreeMap<PathBuf, Vec<u8>>)]| group.iter().all(|(_, t)| !t.is_empty() && *t == group[0].1);
    let (vmt_same, seg_same) = (same(&vmt), same(&seg));
    let files = vmt[0].1.len() + seg[0].1.len();
    let mut o = Outcome::new(
        failures.is_empty() && vmt_same && seg_same,
        format!("{files} output files; vmt identical across runs at 1/4 threads: {vmt_same}, segment: {seg_same}"),
    );
    for f in failures {
        o = o.note(f);
    }
    o
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temporary directory");
    let suite = work.path().join("suite");
    let synth = egoflow(&["synth", "--seed", &SUITE_SEED.to_string(), "--count", &SUITE_SIZE.to_string(), "--out", s(&suite)]);
    if !synth.status.success() {
        eprintln!("synth failed: {}", String::from_utf8_lossy(&synth.stderr));
    }

    let criteria: Vec<(&str, Check)> = vec![
        ("closed-form fields match direct evaluation", Box::new(closed_form)),
        ("oracle equivalence on static scenes", Box::new(oracle_equivalence)),
        ("depth invariance of rotation", Box::new(depth_invariance)),
        ("decomposition completeness", Box::new(decomposition)),
        ("codec round trips", Box::new(codecs)),
        ("end-to-end compensation", Box::new(|| end_to_end(&suite, work.path()))),
        ("KITTI ingest sanity on a real raw segment", Box::new(kitti_sanity)),
        ("performance budget", Box::new(performance)),
        ("determinism across thread counts", Box::new(|| determinism(&suite, work.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        for n in &o.notes {
            println!("       {n}");
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
