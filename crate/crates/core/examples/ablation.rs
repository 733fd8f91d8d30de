//! Short strategy/schedule ablation on an in-memory large-motion corpus.
//!
//! `cargo run --release --example ablation -- [triplets] [lora_steps]`

use hierdit::ablation::{run_ablation, AblationConfig, Arm};
use hierdit::corpus::{generate_triplet, CorpusConfig, LoadedTriplet, MotionPreset};

fn main() -> hierdit::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(120);
    let lora_steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let cc = CorpusConfig {
        seed: 9,
        size: 32,
        count,
        min_primitives: 2,
        max_primitives: 4,
        motion: MotionPreset::Large,
        ..CorpusConfig::default()
    };
    let corpus: Vec<LoadedTriplet> = (0..count)
        .map(|i| {
            generate_triplet(&cc, i).map(|(_, _, t)| LoadedTriplet {
                target: t.target,
                line: t.lineart,
                reference: t.reference,
            })
        })
        .collect::<Result<_, _>>()?;

    let cfg = AblationConfig {
        seeds: vec![1],
        arms: Arm::ALL.to_vec(),
        pretrain_steps: 1500,
        lora_steps,
        holdout: 20,
        ..AblationConfig::default()
    };
    let report = run_ablation(&cfg, &corpus, &mut |line| eprintln!("{line}"))?;
    println!("{}", report.render());
    print!("{}", report.to_csv()?);
    Ok(())
}
