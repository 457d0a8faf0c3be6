//! IO, configuration, file formats, and campaign orchestration for the
//! rotation-sensor estimation toolkit. The algorithms live in `qrot-core`;
//! this crate wraps them in a reproducible command-line workflow.

pub mod campaign;
pub mod config;
pub mod error;
pub mod frequency;
pub mod output;
pub mod records;
pub mod replay;
pub mod snapshot;
pub mod table;

pub use campaign::{run_campaign, run_campaign_raw, CampaignMode, CampaignOutput};
pub use config::{CampaignConfig, ConfigFile, Overrides};
pub use error::{CliError, Result};
