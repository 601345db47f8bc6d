use core::fmt;

/// Errors raised by the geometry, rendering, loss and metric routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The two 6D rotation vectors are (near) parallel or vanishing.
    DegenerateRotation,
    /// A point handed to the projection lies at or behind the camera plane.
    BehindCamera,
    /// Backprojection or a point loss found no usable points.
    EmptyCloud,
    /// A mesh without faces was handed to the renderer.
    EmptyMesh,
    /// Mesh data violates an invariant.
    InvalidMesh(&'static str),
    /// Two images, masks or buffers disagree in size.
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A pseudo mask has an empty positive or negative region.
    EmptyRegion(&'static str),
    /// Image too small for the requested number of MS-SSIM scales.
    TooSmall { needed: usize, found: usize },
    /// RGB-D objective requested but the sensor frame carries no depth.
    MissingDepth,
    /// A batch metric was called with no samples.
    EmptyList,
    /// Two parameter vectors differ in length.
    LengthMismatch { left: usize, right: usize },
    /// The ground-truth pose renders no foreground.
    EmptyRendering,
    /// A configuration value is out of its valid range.
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateRotation => write!(f, "degenerate 6D rotation (parallel or zero vectors)"),
            Error::BehindCamera => write!(f, "point lies behind the camera"),
            Error::EmptyCloud => write!(f, "point cloud is empty"),
            Error::EmptyMesh => write!(f, "mesh has no faces"),
            Error::InvalidMesh(why) => write!(f, "invalid mesh: {why}"),
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::EmptyRegion(which) => write!(f, "empty {which} region in pseudo mask"),
            Error::TooSmall { needed, found } => {
                write!(f, "image side {found} px too small, need at least {needed} px")
            }
            Error::MissingDepth => write!(f, "RGB-D loss requested but sensor depth is missing"),
            Error::EmptyList => write!(f, "no samples given"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::EmptyRendering => write!(f, "pose renders no foreground"),
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
