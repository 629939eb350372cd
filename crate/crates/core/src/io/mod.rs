//! Configuration files, named presets and exporters.

pub mod config;
pub mod export;
pub mod presets;

pub use config::{parse_config, ConfigError, Format, RunConfig, Structure};
pub use export::ExportError;
pub use presets::{preset, preset_names, Preset};
