//! Fault-injection hooks for the validation suite.
//!
//! The `validate` command needs to demonstrate that its oracle checks
//! actually detect broken geometry, so the curvature pipelines consult one
//! process-global switch that negates the second fundamental form. Nothing
//! else in the crate reads these; leave them off in normal use.

use std::sync::atomic::{AtomicBool, Ordering};

static FLIP_A_SIGN: AtomicBool = AtomicBool::new(false);

/// Negate `a_ij` in every subsequent curvature computation.
pub fn set_flip_a_sign(on: bool) {
    FLIP_A_SIGN.store(on, Ordering::SeqCst);
}

pub(crate) fn a_sign() -> f64 {
    if FLIP_A_SIGN.load(Ordering::Relaxed) {
        -1.0
    } else {
        1.0
    }
}
