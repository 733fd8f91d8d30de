//! Triplet generation and the interval-reduction pairing loop.

use hierdit::corpus::{
    generate_triplet, select_pair, CorpusConfig, FrameSequence, MotionPreset, SceneConfig, DEFAULT_MIN_MATCHES, DEFAULT_START_INTERVAL,
};

fn main() -> hierdit::Result<()> {
    for motion in [MotionPreset::None, MotionPreset::Small, MotionPreset::Large] {
        let cfg = CorpusConfig {
            motion,
            ..CorpusConfig::default()
        };
        let mean: f64 = (0..20)
            .map(|i| generate_triplet(&cfg, i).map(|(_, _, t)| t.displacement))
            .sum::<hierdit::Result<f64>>()?
            / 20.0;
        println!("{motion:>5} motion: mean displacement {mean:.2} px over 20 triplets");
    }

    let cfg = SceneConfig::default();
    for speed in [0.0, 0.5, 1.5, 3.0] {
        let frames = FrameSequence::random(5, 5, 24, speed, &cfg)?;
        let (a, b) = select_pair(&frames, DEFAULT_START_INTERVAL, DEFAULT_MIN_MATCHES)?;
        let matches = frames.count_matches(a, b);
        println!("drift speed {speed:>3} px/frame: pair ({a}, {b}) with {matches} keypoint matches");
    }
    Ok(())
}
