//! Rendering component weights as fixed-geometry Parula topoplots.
//!
//! Raster convention: 134 rows × 136 columns, nose up, left ear on the left.
//! The head is a plain disk of radius 67 px centered in the raster.

mod layout;
mod palette;
mod png_io;
mod render;

pub use layout::{disk_to_pixel, project_electrodes, ScalpLayout, DISK_RADIUS_PX, EQUATOR_RADIUS};
pub use palette::{parula64, Palette, PALETTE_LEN};
pub use png_io::{export_png, load_png, write_png};
pub use render::{render_topoplot, render_weights, RgbImage, Topoplot};

pub const RASTER_ROWS: usize = 134;
pub const RASTER_COLS: usize = 136;
