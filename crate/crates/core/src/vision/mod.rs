//! Synthetic camera and the color-blob object detector.

mod blobs;
mod color;
mod detect;
mod image;
mod render;

pub use blobs::{extract_blobs, Blob};
pub use color::{rgb_to_lab, ColorClass, ColorId, Lab};
pub use detect::{
    detect_objects, expected_blob_area, filter_outliers, Detection, DetectionDiagnostics, DetectorParams,
};
pub use image::{threshold, Image, Mask};
pub use render::{render_scene, RenderParams, SceneDisc};
