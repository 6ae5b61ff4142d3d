//! Convolutional synthesis and analysis operators.

mod bank;
mod multiscale;
mod operator;

pub use bank::{analyze, analyze_down, dict_gradient, synthesize, synthesize_up, DictionaryBank};
pub use multiscale::{
    ms_analyze, ms_coefficient_images, ms_filter_gradients, ms_synthesize, MultiScaleDictionary,
};
pub use operator::{operator_norm, ConvOperator, StackedPair, UntiedPair};

/// Power iteration stops once the relative change drops below this.
pub const POWER_ITERATION_TOL: f64 = 1e-6;
/// Power iteration cap.
pub const POWER_ITERATION_MAX: usize = 200;
