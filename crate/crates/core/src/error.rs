//! Crate-wide error with process exit codes.

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::eval::EvalError;
use crate::inference::InferenceError;
use crate::io::IoError;
use crate::labeler::LabelError;
use crate::raster::RasterError;
use crate::rowdetect::RowDetectError;
use crate::superpixel::SuperpixelError;
use crate::synthfield::SynthError;

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const EMPTY_SEGMENTATION: i32 = 3;
    pub const NO_LINES: i32 = 4;
    pub const DATASET_TOO_SMALL: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("no crop lines detected")]
    NoLines,
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    RowDetect(#[from] RowDetectError),
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        use exit::*;
        match self {
            Error::Config(_)
            | Error::Synth(_)
            | Error::RowDetect(RowDetectError::InvalidConfig(_))
            | Error::Superpixel(_)
            | Error::Label(LabelError::InvalidConfig(_))
            | Error::Classifier(ClassifierError::InvalidConfig(_))
            | Error::Inference(InferenceError::InvalidConfig(_)) => CONFIG,
            Error::Raster(RasterError::EmptySegmentation) => EMPTY_SEGMENTATION,
            Error::NoLines | Error::RowDetect(RowDetectError::EmptySkeleton) | Error::Label(LabelError::NoLines) => {
                NO_LINES
            }
            Error::Label(LabelError::TooFewSamples { .. })
            | Error::Classifier(ClassifierError::SingleClassTrainSet)
            | Error::Eval(EvalError::SingleClass) => DATASET_TOO_SMALL,
            Error::Io(_)
            | Error::RowDetect(RowDetectError::MalformedCsv(_))
            | Error::Label(LabelError::Io(_) | LabelError::Collision(_) | LabelError::Manifest(_))
            | Error::Classifier(
                ClassifierError::Io(_)
                | ClassifierError::MalformedCsv(_)
                | ClassifierError::MalformedModel(_)
                | ClassifierError::UnknownPatch(_),
            ) => IO,
            _ => 1,
        }
    }

    /// Short machine-readable name of the exit code.
    pub fn code_name(&self) -> &'static str {
        match self.exit_code() {
            exit::CONFIG => "bad_config",
            exit::EMPTY_SEGMENTATION => "empty_segmentation",
            exit::NO_LINES => "no_lines",
            exit::DATASET_TOO_SMALL => "dataset_too_small",
            exit::IO => "io",
            _ => "internal",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Error::from(RasterError::EmptySegmentation).exit_code(), 3);
        assert_eq!(Error::from(LabelError::NoLines).exit_code(), 4);
        assert_eq!(Error::from(RowDetectError::EmptySkeleton).exit_code(), 4);
        assert_eq!(Error::from(ClassifierError::SingleClassTrainSet).exit_code(), 5);
        assert_eq!(Error::from(SynthError::UnknownPreset("x".into())).exit_code(), 2);
        assert_eq!(Error::Config("x".into()).code_name(), "bad_config");
        let io = IoError::file(std::path::Path::new("a"), std::io::ErrorKind::NotFound.into());
        assert_eq!(Error::from(io).exit_code(), 6);
    }
}
