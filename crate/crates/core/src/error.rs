use thiserror::Error;

use crate::calibration::ConvergenceReport;
use crate::gamut::SurfaceMatch;
use crate::neugebauer::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid ink set: {0}")]
    InvalidInkSet(String),

    #[error("NP count {k}^{n} overflows a 64-bit integer")]
    NpCountOverflow { k: u32, n: u32 },

    #[error("{count} NPs exceed the materialization cap of {cap}")]
    CapExceeded { count: u64, cap: u64 },

    #[error("model mismatch: NP {0} is not in the table")]
    UnknownNp(u64),

    #[error("invalid NPac: {}", format_violations(.0))]
    InvalidNpac(Vec<Violation>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate gamut: {0}")]
    DegenerateGamut(String),

    #[error("out_of_gamut: closest surface Lab {:.4},{:.4},{:.4} ({:.4} from target)",
        .0.lab.l, .0.lab.a, .0.lab.b, .0.delta_e)]
    OutOfGamut(Box<SurfaceMatch>),

    #[error("non_convergence: {0}")]
    NonConvergence(String),

    #[error("calibration did not converge: mean residual {:.3} after {} iterations",
        .0.final_mean(), .0.iterations.len())]
    CalibrationNonConvergence(Box<ConvergenceReport>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
