//! Synthetic triplet corpus: procedural flat-colour scenes, their line art,
//! pose-perturbed references, and frame-pair selection.

mod emit;
mod pairing;
mod scene;
mod triplet;

pub use emit::{emit_corpus, generate_triplet, Corpus, CorpusConfig, LoadedTriplet, ManifestRow, CONFIG_FILE, MANIFEST_FILE};
pub use pairing::{keypoints, select_pair, FrameSequence, Keypoint, DEFAULT_MIN_MATCHES, DEFAULT_START_INTERVAL, KEYPOINTS_PER_PRIMITIVE};
pub use scene::{generate_scene, render, Pose, Primitive, Rendered, Scene, SceneConfig, Shape, MIN_PALETTE_DELTA_E};
pub use triplet::{
    displacement, measure_displacement, render_triplet, Correspondence, MotionPreset, PoseDelta, PrimitiveDelta, TripletSample,
};
