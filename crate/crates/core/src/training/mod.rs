//! Learning-rate schedules, the StableAdamW optimizer, the granularity
//! curriculum and the training driver.

mod curriculum;
mod optim;
mod presets;
mod run;
mod schedule;

pub use curriculum::CurriculumSpec;
pub use optim::{adamw_tensor_update, stable_adamw_step, AdamConfig, OptState};
pub use presets::Preset;
pub use run::{
    heldout_loss, train_run, DataSection, MetricRecord, RunConfig, StageSection, TrainState,
};
pub use schedule::{Phase, ScheduleShape, ScheduleSpec};
