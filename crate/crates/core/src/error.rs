use std::path::PathBuf;

/// Errors produced by the reconstruction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("azimuth undefined: normal is parallel to the optical axis")]
    UndefinedAzimuth,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate normal: tangent stack has rank class {0:?}")]
    DegenerateNormal(crate::geom::RankClass),
    #[error("degenerate camera rig: optical axes are collinear")]
    DegenerateRig,
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error("sphere tracing must start outside the surface (f = {value})")]
    InvalidStart { value: f64 },
    #[error("unstable intersection: |grad f . dir| = {0:e}")]
    UnstableIntersection(f64),
    #[error("numeric failure in layer {layer}")]
    NumericLayer { layer: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid rig spec: {0}")]
    RigSpec(String),
    #[error("render error: {0}")]
    Render(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("format error in {path:?}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by non-finite numbers rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericLayer { .. } | Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
