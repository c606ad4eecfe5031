//! Synthetic CAD models and scenes, rasterization, canonical views, region
//! cropping and the on-disk dataset layout.

mod io;
mod render;
mod roi;
mod synth;
mod views;

pub use io::{load_annotations, load_dataset, save_annotations, save_dataset};
pub use render::{render_view, render_view_full, screen_bounds, shade, Raster, ViewRender, NO_OBJECT};
pub use roi::{crop_region, square_roi, RoiConfig, ROI_CHANNELS};
pub use synth::{
    derive_seed, generate_dataset, project_object, render_scene, CadEntry, CanonicalView, Dataset,
    DatasetSpec, Family, Placement, PosePrior, RegionGt, Sample, Split, MAX_OBJECTS,
};
pub use views::{
    jitter_rotation, jittered_gt_view, random_axis, region_from_render, select_canonical_views, view_region,
    DEFAULT_VIEW_JITTER,
};
