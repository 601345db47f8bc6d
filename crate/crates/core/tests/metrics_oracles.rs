use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softpose_core::geometry::transform_points;
use softpose_core::linalg::{self, Vec3};
use softpose_core::metrics::*;
use softpose_core::primitives::{icosphere, unit_cube, FaceColoring};
use softpose_core::{Error, Pose, SymmetrySet, TriMesh};

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
    let t = [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(1.0..3.0)];
    Pose::from_rt(&linalg::axis_angle(axis, rng.random_range(0.0..3.1)), t)
}

fn nudge(rng: &mut ChaCha8Rng, pose: &Pose) -> Pose {
    let axis = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
    let r = linalg::mat_mul(&linalg::axis_angle(axis, rng.random_range(0.0..0.5)), &pose.rotation().unwrap());
    let t = linalg::add(pose.trans, [0, 1, 2].map(|_| rng.random_range(-0.05..0.05)));
    Pose::from_rt(&r, t)
}

fn brute_add(pred: &Pose, gt: &Pose, pts: &[Vec3]) -> f64 {
    let a = transform_points(gt, pts).unwrap();
    let b = transform_points(pred, pts).unwrap();
    a.iter().zip(&b).map(|(p, q)| linalg::dist(*p, *q)).sum::<f64>() / pts.len() as f64
}

fn brute_adds(pred: &Pose, gt: &Pose, pts: &[Vec3]) -> f64 {
    let a = transform_points(gt, pts).unwrap();
    let b = transform_points(pred, pts).unwrap();
    b.iter().map(|q| a.iter().map(|p| linalg::dist(*p, *q)).fold(f64::INFINITY, f64::min)).sum::<f64>() / pts.len() as f64
}

fn random_mesh(rng: &mut ChaCha8Rng, n: usize) -> TriMesh {
    let vertices: Vec<Vec3> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-0.1..0.1))).collect();
    let faces = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
    TriMesh::with_uniform_color(vertices, faces, [0.5; 3]).unwrap()
}

#[test]
fn add_and_adds_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let n = rng.random_range(3..=512);
        let mesh = random_mesh(&mut rng, n);
        let gt = random_pose(&mut rng);
        let pred = nudge(&mut rng, &gt);
        let add = e_add(&pred, &gt, &mesh).unwrap();
        let adds = e_add_s(&pred, &gt, &mesh).unwrap();
        let (add_o, adds_o) = (brute_add(&pred, &gt, mesh.vertices()), brute_adds(&pred, &gt, mesh.vertices()));
        assert!((add - add_o).abs() <= 1e-9 * add_o);
        assert!((adds - adds_o).abs() <= 1e-9 * adds_o, "{adds} vs {adds_o}");
    }
}

#[test]
fn adds_never_exceeds_add() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mesh = icosphere(0.1, 2, FaceColoring::Gradient).unwrap();
    for _ in 0..100 {
        let gt = random_pose(&mut rng);
        let pred = nudge(&mut rng, &gt);
        assert!(e_add_s(&pred, &gt, &mesh).unwrap() <= e_add(&pred, &gt, &mesh).unwrap() + 1e-15);
    }
}

#[test]
fn add_is_invariant_under_a_common_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cube = unit_cube(FaceColoring::DistinctFaces).unwrap();
    for _ in 0..50 {
        let gt = random_pose(&mut rng);
        let pred = nudge(&mut rng, &gt);
        let common = random_pose(&mut rng);
        let a = e_add(&pred, &gt, &cube).unwrap();
        let b = e_add(&common.compose(&pred).unwrap(), &common.compose(&gt).unwrap(), &cube).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn recall_cases() {
    let cube = unit_cube(FaceColoring::DistinctFaces).unwrap();
    let sym = SymmetrySet::identity_only();
    let half_turn = SymmetrySet::cyclic([0.0, 0.0, 1.0], 2).unwrap();
    let gt = Pose::from_rt(&linalg::IDENTITY, [0.0, 0.0, 2.0]);
    let near = Pose { trans: [0.0, 0.0, 2.01], ..gt };
    let far = Pose { trans: [0.0, 0.0, 2.5], ..gt };
    let est = |pred, sym| PoseEstimate { pred, gt, mesh: &cube, sym };
    assert_eq!(add_recall(&[est(gt, &sym), est(near, &sym)], 0.1, true).unwrap(), 100.0);
    assert_eq!(add_recall(&[est(near, &sym), est(far, &sym)], 0.1, true).unwrap(), 50.0);
    assert_eq!(add_recall(&[est(far, &sym)], 1e9, true).unwrap(), 100.0);
    assert_eq!(add_recall(&[], 0.1, true), Err(Error::EmptyList));

    // a quarter turn about z maps the cube onto itself: ADD-S sees no error, ADD does
    let quarter = Pose::from_rt(&linalg::axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2), gt.trans);
    let batch = [est(quarter, &half_turn), est(quarter, &sym)];
    let per_item: Vec<bool> = batch
        .iter()
        .map(|e| {
            let err = if e.sym.is_symmetric() { e.e_add_s().unwrap() } else { e.e_add().unwrap() };
            err < 0.1 * cube.diameter()
        })
        .collect();
    assert_eq!(per_item, vec![true, false]);
    assert_eq!(add_recall(&batch, 0.1, true).unwrap(), 50.0);
    assert_eq!(add_recall(&batch, 0.1, false).unwrap(), 0.0);
}

#[test]
fn auc_closed_form_matches_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let errors: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..0.15)).collect();
        let exact = auc(&errors, AUC_MAX_THRESHOLD).unwrap();
        let swept = auc_sweep(&errors, AUC_MAX_THRESHOLD, 1000).unwrap();
        assert!((exact - swept).abs() < 0.1, "{exact} vs {swept}");
    }
    assert_eq!(auc(&[0.12, 0.1], 0.1).unwrap(), 0.0);
    assert!((auc(&[0.05], 0.1).unwrap() - 50.0).abs() < 1e-12);
}

#[test]
fn auc_is_monotone_in_each_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut errors: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..0.12)).collect();
    let mut prev = auc(&errors, 0.1).unwrap();
    for k in 0..errors.len() {
        errors[k] += 0.01;
        let now = auc(&errors, 0.1).unwrap();
        assert!(now <= prev);
        prev = now;
    }
}

#[test]
fn miou_stays_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..50 {
        let a = softpose_core::Mask::from_fn(9, 7, |_, _| rng.random::<f64>());
        let b = softpose_core::Mask::from_fn(9, 7, |_, _| rng.random::<f64>());
        let v = miou(&a, &b).unwrap();
        assert!((0.0..=100.0).contains(&v));
    }
}

#[test]
fn rotation_error_recovers_the_composed_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..100 {
        let base = random_pose(&mut rng);
        let angle = rng.random_range(0.0..179.0);
        let axis = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
        let r = linalg::mat_mul(&base.rotation().unwrap(), &linalg::axis_angle(axis, f64::to_radians(angle)));
        let e = rotation_angle_error(&base, &Pose::from_rt(&r, base.trans)).unwrap();
        assert!((e - angle).abs() < 1e-6, "{e} vs {angle}");
    }
    let p = Pose::identity();
    assert_eq!(rotation_angle_error(&p, &p).unwrap(), 0.0);
}
