//! End-to-end verdicts: simulated safety and invariance, tangent-cone
//! conditions, and sampled conditional-invariance conditions.

mod conditions;
mod safety;

pub use conditions::{nagumo_check, prop1_check, NagumoConfig, NagumoMode, Prop1Config, Prop1Mode, SHELL_RELATIVE_WIDTH};
pub use safety::{
    replay_witness, simulate_safety_check, Coverage, SafetyMode, SafetyProblem, SafetyReport, SafetyRoles,
    SafetyVerdict, SamplePlan, ViolationWitness,
};
