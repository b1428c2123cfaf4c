//! Deterministic file population, the six tabular encoders, README rendering
//! and an on-demand virtual filesystem.

pub mod decode;
pub mod encode;
mod populate;
pub mod readme;
pub mod vfs;
mod xlsx;

use serde::{Deserialize, Serialize};

pub use decode::{decode_table, DecodeError, DecodedTable};
pub use encode::encode_table;
pub use populate::{cell_for, draw_row_count, populate_file, populate_traced, Column, MaterializeError, TableData, CONTINUOUS_SIG_FIGS};
pub use readme::{parse_readme, render_readme, README_PATH};
pub use vfs::{export_repository, file_bytes, glob_segment, truncate_lines, vfs_list, vfs_read, ExportError, VfsError};
pub use xlsx::{read_xlsx_cells, XlsxError};

/// Row-count and noise parameters for populating files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterializerParams {
    pub mu_rows: f64,
    pub sigma_rows: f64,
    pub sigma_noise: f64,
}

impl Default for MaterializerParams {
    fn default() -> Self {
        Self {
            mu_rows: 150.0,
            sigma_rows: 40.0,
            sigma_noise: 0.1,
        }
    }
}

impl MaterializerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !self.mu_rows.is_finite() || self.mu_rows <= 0.0 {
            return Err(format!("mu_rows must be positive, got {}", self.mu_rows));
        }
        if !self.sigma_rows.is_finite() || self.sigma_rows <= 0.0 {
            return Err(format!("sigma_rows must be positive, got {}", self.sigma_rows));
        }
        if !self.sigma_noise.is_finite() || self.sigma_noise < 0.0 {
            return Err(format!("sigma_noise must be non-negative, got {}", self.sigma_noise));
        }
        Ok(())
    }
}
