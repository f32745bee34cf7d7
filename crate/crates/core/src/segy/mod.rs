//! Read-only SEG-Y rev1 ingestion and the real-data patch pipeline.

mod ibm;
mod real;
mod volume;

pub use ibm::{ibm_to_ieee, ieee_be_to_f64};
pub use real::{
    export_map, load_mask, map_to_csv, map_to_pgm, mask_file_name, mask_from_image, real_patches, resize_bilinear,
    resize_nearest, tile_predict, tile_predict_with, MapFormat, REAL_STRIDE, REAL_WINDOW,
};
pub use volume::{
    open_volume, read_section, Axis, KeyOffsets, SampleFormat, SegyVolume, SeismicSection, TraceEntry,
    BINARY_HEADER_LEN, DATA_START, TEXT_HEADER_LEN, TRACE_HEADER_LEN,
};
