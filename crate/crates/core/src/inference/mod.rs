//! Standard errors, class contrasts, model selection and classification.

mod classify;
mod score;
mod selection;
mod stats;

pub use classify::{argmax, assign, classify, Assignment};
pub use score::{observed_information, score_vector};
pub use selection::{bic, select_k, SelectionRow, SelectionTable};
pub use stats::{
    class_contrasts, delta_method_se, difference_se, infer, information_inverse, normal_p_value, standard_errors,
    ClassContrast, InferenceReport, LatentDimension, LatentRow, ParameterRow, Wald,
};
