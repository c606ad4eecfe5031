//! Rotation bins, coarse-to-fine rotation codec with the geodesic gate,
//! box-relative centre regression and depth-plane lifting.

mod bins;
mod camera;
mod codec;
mod loss;

pub use bins::{build_bins, RotationBins};
pub use camera::{flip_pose, flip_rotation, lift_center, CameraIntrinsics};
pub use codec::{
    decode_center, decode_rotation, encode_center, encode_rotation, PoseTarget, RotationTarget,
};
pub use loss::{huber, huber_grad, pose_loss, PoseLoss};
