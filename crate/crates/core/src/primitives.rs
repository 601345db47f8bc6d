//! Built-in meshes for synthetic scenes and tests.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::TriMesh;
use crate::linalg::{self, Vec3};

/// How vertex colors are assigned to a built-in mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceColoring {
    /// One saturated color per cube face (per face-group for other meshes).
    DistinctFaces,
    /// Color follows the normalized vertex position.
    Gradient,
    Uniform(Vec3),
}

const FACE_PALETTE: [Vec3; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
];

fn gradient_color(p: Vec3, half_extent: f64) -> Vec3 {
    p.map(|c| (0.5 + 0.5 * c / half_extent).clamp(0.0, 1.0))
}

/// Axis-aligned cube of side 1 centered at the origin. Each face owns its four vertices so
/// faces can carry distinct colors.
pub fn unit_cube(coloring: FaceColoring) -> Result<TriMesh> {
    // (normal axis, sign) per face, corners ordered counter-clockwise seen from outside
    let faces_def: [[Vec3; 4]; 6] = [
        [[0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [0.5, 0.5, 0.5], [0.5, -0.5, 0.5]],
        [[-0.5, -0.5, -0.5], [-0.5, -0.5, 0.5], [-0.5, 0.5, 0.5], [-0.5, 0.5, -0.5]],
        [[-0.5, 0.5, -0.5], [-0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.5, 0.5, -0.5]],
        [[-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, -0.5, 0.5], [-0.5, -0.5, 0.5]],
        [[-0.5, -0.5, 0.5], [0.5, -0.5, 0.5], [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5]],
        [[-0.5, -0.5, -0.5], [-0.5, 0.5, -0.5], [0.5, 0.5, -0.5], [0.5, -0.5, -0.5]],
    ];
    let mut vertices = Vec::with_capacity(24);
    let mut colors = Vec::with_capacity(24);
    let mut faces = Vec::with_capacity(12);
    for (f, quad) in faces_def.iter().enumerate() {
        let base = vertices.len();
        for &v in quad {
            vertices.push(v);
            colors.push(match coloring {
                FaceColoring::DistinctFaces => FACE_PALETTE[f],
                FaceColoring::Gradient => gradient_color(v, 0.5),
                FaceColoring::Uniform(c) => c,
            });
        }
        faces.push([base, base + 1, base + 2]);
        faces.push([base, base + 2, base + 3]);
    }
    TriMesh::new(vertices, faces, colors)
}

/// Square of side 1 in the object `z = 0` plane, facing `-z`.
pub fn unit_square(color: Vec3) -> Result<TriMesh> {
    let vertices = alloc::vec![[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]];
    TriMesh::with_uniform_color(vertices, alloc::vec![[0, 1, 2], [0, 2, 3]], color)
}

/// Icosphere of the given radius obtained by subdividing an icosahedron.
pub fn icosphere(radius: f64, subdivisions: u32, coloring: FaceColoring) -> Result<TriMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = alloc::vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut verts {
        *v = linalg::scale(*v, 1.0 / linalg::norm(*v));
    }
    for _ in 0..subdivisions {
        let mut midpoints: alloc::collections::BTreeMap<(usize, usize), usize> = Default::default();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = linalg::scale(linalg::add(verts[a], verts[b]), 0.5);
                verts.push(linalg::scale(m, 1.0 / linalg::norm(m)));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let colors = verts
        .iter()
        .map(|&v| match coloring {
            FaceColoring::DistinctFaces => {
                // octant-based palette keeps neighbouring regions distinguishable
                let idx = (v[0] >= 0.0) as usize + 2 * (v[1] >= 0.0) as usize + ((v[2] >= 0.0) as usize);
                FACE_PALETTE[idx % FACE_PALETTE.len()]
            }
            FaceColoring::Gradient => gradient_color(v, 1.0),
            FaceColoring::Uniform(c) => c,
        })
        .collect();
    let verts = verts.into_iter().map(|v| linalg::scale(v, radius)).collect();
    TriMesh::new(verts, faces, colors)
}
