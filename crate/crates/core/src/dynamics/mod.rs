//! Differential inclusions `ẋ ∈ F(x)`: fields, selections, backward and
//! time-rescaled variants, and the built-in systems.

mod field;
mod inclusion;

pub use field::{builtin_field, linear_safe_matrix, rescale_field, FieldHandle, FieldSource, BUILTIN_SYSTEMS};
pub use inclusion::{
    eval_inclusion, lipschitz_estimate, negate, rescale_inclusion, select, selector_family, BundlePlan, InclusionSpec,
    InclusionValue, Selector,
};
