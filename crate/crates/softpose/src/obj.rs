//! Wavefront OBJ subset: `v x y z [r g b]` and triangular `f i j k` with 1-based indices.

use std::path::Path;

use softpose_core::geometry::DEFAULT_VERTEX_COLOR;
use softpose_core::TriMesh;

use crate::error::FormatError;

pub fn parse_obj(text: &str) -> Result<TriMesh, FormatError> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let nums: Vec<f64> = fields
                    .map(|f| f.parse::<f64>().map_err(|_| FormatError::parse(line, format!("bad number `{f}`"))))
                    .collect::<Result<_, _>>()?;
                match nums.len() {
                    3 => colors.push(DEFAULT_VERTEX_COLOR),
                    6 => colors.push([nums[3], nums[4], nums[5]]),
                    n => return Err(FormatError::parse(line, format!("vertex needs 3 or 6 values, found {n}"))),
                }
                vertices.push([nums[0], nums[1], nums[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = fields.map(|f| face_index(f, vertices.len(), line)).collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(FormatError::parse(line, format!("only triangles are supported, face has {} vertices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok(TriMesh::new(vertices, faces, colors)?)
}

/// Index before any `/` (texture and normal references are ignored), converted to 0-based.
fn face_index(field: &str, vertex_count: usize, line: usize) -> Result<usize, FormatError> {
    let head = field.split('/').next().unwrap_or("");
    let k: usize = head.parse().map_err(|_| FormatError::parse(line, format!("bad face index `{field}`")))?;
    if k == 0 || k > vertex_count {
        return Err(FormatError::parse(line, format!("face index {k} outside 1..={vertex_count}")));
    }
    Ok(k - 1)
}

pub fn load_obj(path: &Path) -> Result<TriMesh, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_obj(&text).map_err(|e| e.in_file(path))
}
