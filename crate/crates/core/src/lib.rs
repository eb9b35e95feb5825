//! Contact localization for a compliant whisker sensor.

pub mod beam_oracle;
pub mod kinematics;
pub mod sensor_model;
pub mod estimators;
pub mod signal;
pub mod experiments;
