use softpose::frame::{read_frame, write_frame, Frame};
use softpose::obj::parse_obj;
use softpose::png_io::{self, depth_to_units, DEPTH_UNIT_M};
use softpose::pose_io::{parse_pose_lines, parse_symmetries, pose_lines, PoseRecord};
use softpose_core::geometry::DEFAULT_VERTEX_COLOR;
use softpose_core::linalg;
use softpose_core::losses::{PseudoLabels, SensorFrame};
use softpose_core::{Camera, DepthMap, Mask, Pose, RgbImage};

const TETRA: &str = "\
# tetrahedron
o thing
v 0 0 0 1 0 0
v 1 0 0
v 0 1 0 0 0 1
v 0 0 1
vn 0 0 1
f 1 2 3
f 1/1/1 2/2/1 4/3/1
f 2 3 4
";

#[test]
fn obj_reads_vertices_colors_and_faces() {
    let mesh = parse_obj(TETRA).unwrap();
    assert_eq!(mesh.vertices().len(), 4);
    assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 1, 3], [1, 2, 3]]);
    assert_eq!(mesh.colors()[0], [1.0, 0.0, 0.0]);
    assert_eq!(mesh.colors()[1], DEFAULT_VERTEX_COLOR);
    assert_eq!(mesh.colors()[2], [0.0, 0.0, 1.0]);
    assert!((mesh.diameter() - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn obj_errors_carry_line_numbers() {
    let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    assert_eq!(parse_obj(quad).unwrap_err().line(), Some(5));
    let out_of_range = "v 0 0 0\nv 1 0 0\nv 1 1 0\n\nf 1 2 4\n";
    assert_eq!(parse_obj(out_of_range).unwrap_err().line(), Some(5));
    assert_eq!(parse_obj("v 0 0 0\nf 0 1 1\n").unwrap_err().line(), Some(2));
    assert_eq!(parse_obj("v 0 0 x\n").unwrap_err().line(), Some(1));
    assert_eq!(parse_obj("v 0 0 0 1\n").unwrap_err().line(), Some(1));
    // degenerate faces are rejected by the mesh itself
    assert!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 2\n").is_err());
}

#[test]
fn pose_records_round_trip() {
    let pose = Pose::from_rt(&linalg::axis_angle([0.2, -0.5, 0.3], 1.2), [0.1, -0.2, 1.5]);
    let rec = PoseRecord::from_pose(&pose).unwrap();
    let back = rec.to_pose().unwrap();
    let (r0, r1) = (pose.rotation().unwrap(), back.rotation().unwrap());
    for i in 0..3 {
        for j in 0..3 {
            assert!((r0[i][j] - r1[i][j]).abs() < 1e-12);
        }
    }
    assert_eq!(back.trans, pose.trans);
    let text = pose_lines(&[pose, back]).unwrap();
    assert_eq!(parse_pose_lines(&text).unwrap().len(), 2);
}

#[test]
fn pose_lines_report_the_failing_line() {
    let good = r#"{"rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,1]}"#;
    let typo = r#"{"rotaton": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,1]}"#;
    let text = format!("{good}\n\n{good}\n{typo}\n");
    assert_eq!(parse_pose_lines(&text).unwrap_err().line(), Some(4));
    let degenerate = r#"{"rotation": [[0,0,0],[0,0,0],[0,0,0]], "translation": [0,0,1]}"#;
    assert_eq!(parse_pose_lines(&format!("{good}\n{degenerate}")).unwrap_err().line(), Some(2));
}

#[test]
fn symmetry_files_parse_rotations() {
    let sym = parse_symmetries("[[[-1,0,0],[0,-1,0],[0,0,1]]]").unwrap();
    assert_eq!(sym.rotations().len(), 2);
    assert_eq!(sym.rotations()[0], linalg::IDENTITY);
    assert!(parse_symmetries("[[[2,0,0],[0,1,0],[0,0,1]]]").is_err());
    assert!(parse_symmetries("[[1,0,0]]").is_err());
}

#[test]
fn depth_round_trips_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("depth.png");
    let depth = DepthMap::from_fn(17, 9, |c, r| if (c + r) % 5 == 0 { 0.0 } else { 0.3 + 0.0371 * c as f64 + 0.113 * r as f64 });
    png_io::write_depth(&path, &depth).unwrap();
    let back = png_io::read_depth(&path).unwrap();
    assert_eq!(back.dims(), depth.dims());
    for (a, b) in depth.data.iter().zip(&back.data) {
        assert!((a - b).abs() <= 0.5e-4 + 1e-12, "{a} vs {b}");
    }
    assert_eq!(depth_to_units(0.0), 0);
    assert_eq!(depth_to_units(f64::NAN), 0);
    assert_eq!(depth_to_units(100.0), u16::MAX);
    assert_eq!(depth_to_units(1.0), (1.0 / DEPTH_UNIT_M) as u16);
}

#[test]
fn color_and_mask_round_trip_at_eight_bits() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage { width: 5, height: 3, data: (0..15).map(|i| [i as f64 / 14.0, 1.0 - i as f64 / 14.0, 0.5]).collect() };
    let mask = Mask::from_fn(5, 3, |c, r| (c * r) as f64 / 8.0);
    png_io::write_color(&dir.path().join("c.png"), &img).unwrap();
    png_io::write_mask(&dir.path().join("m.png"), &mask).unwrap();
    let img2 = png_io::read_color(&dir.path().join("c.png")).unwrap();
    let mask2 = png_io::read_mask(&dir.path().join("m.png")).unwrap();
    for (a, b) in img.data.iter().zip(&img2.data) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
    for (a, b) in mask.data.iter().zip(&mask2.data) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }
    // a mask file is not a depth file
    assert!(png_io::read_depth(&dir.path().join("m.png")).is_err());
}

#[test]
fn frames_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cam = Camera::new(20.0, 20.0, 4.0, 3.0, 8, 6).unwrap();
    let mask = Mask::from_fn(8, 6, |c, _| if (2..6).contains(&c) { 1.0 } else { 0.0 });
    let pose = Pose::from_rt(&linalg::axis_angle([0.0, 1.0, 0.0], 0.3), [0.0, 0.0, 2.0]);
    let color = RgbImage::filled(8, 6, [0.2, 0.4, 0.6]);
    let depth = DepthMap::from_fn(8, 6, |c, _| if (2..6).contains(&c) { 2.0 } else { 0.0 });
    let frame = Frame {
        sensor: SensorFrame::new(color, Some(depth.clone()), cam).unwrap(),
        pseudo: PseudoLabels::new(pose, mask.clone(), mask.clone()).unwrap(),
        gt: Some(pose),
    };
    write_frame(dir.path(), &frame).unwrap();
    let back = read_frame(dir.path()).unwrap();
    assert_eq!(back.sensor.cam, cam);
    for (a, b) in back.sensor.depth.unwrap().data.iter().zip(&depth.data) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(back.pseudo.mask_vis, mask);
    assert!(softpose_core::metrics::rotation_angle_error(&back.gt.unwrap(), &pose).unwrap() < 1e-6);

    let no_depth = Frame { sensor: SensorFrame { depth: None, ..frame.sensor.clone() }, ..frame };
    let dir2 = tempfile::tempdir().unwrap();
    write_frame(dir2.path(), &no_depth).unwrap();
    assert!(!dir2.path().join("depth.png").exists());
    assert!(read_frame(dir2.path()).unwrap().sensor.depth.is_none());
}
