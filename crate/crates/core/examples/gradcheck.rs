//! Central finite differences against the analytic gradient, one entry per tensor.

use hierdit::model::{DitModel, EncodedTriplet, ModelConfig, Tensors, TrainConfig, TrainPhase, Trainer};
use hierdit::raster::RgbImage;

fn main() -> hierdit::Result<()> {
    let cfg = ModelConfig {
        d_model: 12,
        heads: 2,
        depth: 2,
        grid: 4,
        patch: 2,
        ffn_mult: 2,
        pool_kernel: Some(2),
        seed: 5,
        ..ModelConfig::default()
    };
    let mut model = DitModel::new(cfg)?;
    model.copy_query_key_to_context();
    // Nonzero adapters so every factor has a gradient.
    for (i, t) in model.params.tensors_mut().into_iter().enumerate() {
        if t.name.contains(".lora.") {
            for (j, v) in t.data.iter_mut().enumerate() {
                *v = 0.05 * (((i * 31 + j * 17) % 13) as f64 - 6.0) / 6.0;
            }
        }
    }
    let img = |f: fn(usize, usize) -> [u8; 3]| RgbImage::from_fn(8, 8, f);
    let sample = EncodedTriplet::encode(
        &img(|x, y| [(x * 30) as u8, (y * 30) as u8, 120]),
        &img(|x, _| if x == 4 { [0; 3] } else { [255; 3] }),
        &img(|x, y| [(y * 30) as u8, 200, (x * 30) as u8]),
        &model,
    )?;

    for phase in [TrainPhase::Pretrain, TrainPhase::Lora] {
        let t = Trainer::new(model.clone(), phase, TrainConfig::default())?;
        let draws = t.draws(0, 1);
        let (_, grads) = t.loss_and_grad(&[&sample], &draws)?;
        let analytic: Vec<(String, f64)> = grads.tensors().into_iter().map(|g| (g.name, g.data[g.data.len() / 2])).collect();
        let mut worst = 0.0f64;
        for (k, (name, a)) in analytic.iter().enumerate() {
            if !phase.trains(name) {
                continue;
            }
            let eps = 1e-4;
            let mut probe = t.clone();
            let loss_at = |probe: &mut Trainer, delta: f64| -> hierdit::Result<f64> {
                let mut ts = probe.model.params.tensors_mut();
                let e = &mut ts[k];
                let mid = e.data.len() / 2;
                e.data[mid] += delta;
                drop(ts);
                Ok(probe.loss_and_grad(&[&sample], &draws)?.0)
            };
            let up = loss_at(&mut probe, eps)?;
            let down = loss_at(&mut probe, -2.0 * eps)?;
            let fd = (up - down) / (2.0 * eps);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            if rel > 1e-5 {
                println!("  {name}: analytic {a:.6e} fd {fd:.6e} rel {rel:.2e}");
            }
        }
        println!(
            "{phase}: {} tensors checked, worst relative error {worst:.2e}",
            analytic.iter().filter(|(n, _)| phase.trains(n)).count()
        );
    }
    Ok(())
}
