//! Quaternion algebra, meshes, rigid transforms, surface sampling and a
//! generic K-medoid clusterer.

pub mod bbox;
pub mod kdtree;
pub mod kmedoid;
pub mod mesh;
pub mod primitives;
pub mod quat;
pub mod sample;
pub mod vec3;

pub use bbox::BBox;
pub use kdtree::KdTree;
pub use kmedoid::{kmedoid, medoid_cost, Medoids};
pub use mesh::{apply_pose, Pose, TriMesh};
pub use quat::{quat_apply, quat_geodesic, quat_multiply, quat_normalize, Quaternion};
pub use sample::{sample_surface, PointCloud};
pub use vec3::Vec3;
