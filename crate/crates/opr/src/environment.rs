//! The partially rewarded environment: answer predictions with
//! `h ∈ {-1, 0, 1}` without ever revealing the true label.

use serde::Serialize;

use crate::data::MaskedStream;
use crate::{OprError, Result};

/// Environment response to one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Response {
    /// Feedback withheld for this observation.
    Missing,
    /// The prediction did not match the true label.
    Incorrect,
    /// The prediction matched; the true label is thereby known.
    Correct,
}

impl Response {
    pub fn h(self) -> i8 {
        match self {
            Response::Missing => -1,
            Response::Incorrect => 0,
            Response::Correct => 1,
        }
    }
}

/// Answer the prediction (a class in `1..=K`) for the observation at stream
/// position `pos`: `Missing` if the observation is concealed, otherwise
/// correctness of the prediction. Nothing about the true label leaks beyond
/// that single bit.
pub fn respond(stream: &MaskedStream, pos: usize, prediction: usize) -> Result<Response> {
    if pos >= stream.len() {
        return Err(OprError::StepOutOfRange(pos));
    }
    let num_classes = stream.dataset.num_classes;
    if prediction < 1 || prediction > num_classes {
        return Err(OprError::PredictionOutOfRange {
            pred: prediction,
            num_classes,
        });
    }
    if stream.concealed_at(pos) {
        return Ok(Response::Missing);
    }
    Ok(if stream.label_at(pos) == prediction {
        Response::Correct
    } else {
        Response::Incorrect
    })
}
