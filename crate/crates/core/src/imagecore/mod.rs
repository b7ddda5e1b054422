//! Raster containers, label maps and the on-disk formats shared by every
//! other module.
//!
//! All rasters are row-major with the origin at the top-left and y growing
//! downwards. Instance regions are 4-connected.

mod flow;
mod io;
mod labels;
mod mask;
mod raster;
mod rle;

pub use flow::{read_flow_file, write_flow_file, decode_flow, encode_flow, FlowField, FlowFileError, UAFL_MAGIC, UAFL_VERSION};
pub use io::{
    decode_labels_png, decode_raster, encode_labels_png, encode_raster_png, read_labels_png, read_raster,
    write_labels_png, write_raster, IoError,
};
pub use labels::{canonicalize_labels, LabelMap};
pub use mask::{Mask, PixelRect};
pub use raster::Raster8;
pub use rle::{decode_rle, encode_rle, runs_by_label, RleError, RunLengthMask};

/// Offsets of the 4-neighbourhood as (dy, dx).
pub const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
