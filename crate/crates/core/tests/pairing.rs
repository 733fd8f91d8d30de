mod common;

use common::{brute_force_interval, frame_matches};
use hierdit::corpus::{select_pair, FrameSequence, Pose, Primitive, Scene, SceneConfig, Shape};

fn disc(id: usize, x: f64, y: f64) -> Primitive {
    Primitive {
        id,
        shape: Shape::Ellipse { rx: 4.0, ry: 4.0 },
        fill: [50 * id as u8, 100, 200],
        stroke_width: 1.0,
        z: id as i32,
        pose: Pose {
            tx: x,
            ty: y,
            rotation: 0.0,
            scale: 1.0,
        },
    }
}

#[test]
fn primitive_leaving_the_canvas_caps_the_interval() {
    // Three resting discs plus one running off the right edge: its leftmost
    // keypoint (x = 36) is on canvas at frame 5 and off from frame 6.
    let frames: Vec<Scene> = (0..25)
        .map(|f| Scene {
            width: 64,
            height: 64,
            background: [255; 3],
            primitives: vec![
                disc(0, 40.0 + 5.0 * f as f64, 30.0),
                disc(1, 10.0, 10.0),
                disc(2, 10.0, 30.0),
                disc(3, 10.0, 50.0),
            ],
        })
        .collect();
    // A wide gate so only visibility decides.
    let seq = FrameSequence::from_frames(frames, 100.0).unwrap();
    let per_interval: Vec<usize> = (1..=18).map(|i| frame_matches(&seq, i)).collect();
    assert!(
        per_interval[4] >= 25 && per_interval[5..].iter().all(|&m| m == 24),
        "{per_interval:?}"
    );
    let (r, t) = select_pair(&seq, 18, 25).unwrap();
    assert_eq!((r, t), (0, 5));
    assert_eq!(t, brute_force_interval(&seq, 18, 25));
    for i in 1..=18 {
        assert_eq!(seq.count_matches(0, i), per_interval[i - 1]);
    }
}

#[test]
fn random_trajectories_agree_with_brute_force() {
    let cfg = SceneConfig {
        size: 64,
        stroke_width: 1.0,
    };
    let mut shrunk = 0;
    for seed in 0..60u64 {
        let speed = [0.0, 0.5, 1.0, 2.0, 4.0][seed as usize % 5];
        let n = 4 + seed as usize % 3;
        let len = [10, 19, 25][seed as usize % 3];
        let seq = FrameSequence::random(seed, n, len, speed, &cfg).unwrap();
        let (r, t) = select_pair(&seq, 18, 25).unwrap();
        let want = brute_force_interval(&seq, 18, 25);
        assert_eq!((r, t), (0, want), "seed {seed}");
        assert!(t <= 18);
        assert!(t == 1 || frame_matches(&seq, t) >= 25);
        shrunk += usize::from(t < 18.min(len - 1));
    }
    assert!(shrunk > 5, "fixtures should exercise the shrinking loop");
}

#[test]
fn static_scene_and_zero_threshold() {
    let cfg = SceneConfig {
        size: 64,
        stroke_width: 1.0,
    };
    let still = FrameSequence::random(3, 4, 20, 0.0, &cfg).unwrap();
    assert_eq!(select_pair(&still, 18, 25).unwrap(), (0, 18));
    let fast = FrameSequence::random(3, 4, 20, 8.0, &cfg).unwrap();
    assert_eq!(select_pair(&fast, 18, 0).unwrap(), (0, 18));
}
