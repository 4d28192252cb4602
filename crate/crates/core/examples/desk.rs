//! Runs the three core-component variants on the synthetic 64x64 pattern.
//!
//! Usage: `cargo run --release --example desk -- [seed] [iterations]`

use std::time::Instant;

use atrous_sr::ablation::{desk_configs, desk_image, run_cell, suite_cells, synthesize_lr, Suite, TrainingCache};
use atrous_sr::{DegradationModel, MetricOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().expect("seed must be an integer")).unwrap_or(0);
    let (mut train, sampler) = desk_configs(seed);
    if let Some(n) = args.get(2) {
        train.iterations = n.parse().expect("iterations must be an integer");
    }
    let model = DegradationModel::bicubic(2.0);
    let gt = desk_image::<f32>(64);
    let y = synthesize_lr(&gt, &model, 0).expect("64 is a multiple of 2");
    for cell in suite_cells(Suite::CoreComponents, &train, &sampler) {
        let start = Instant::now();
        let row = run_cell(
            Suite::CoreComponents,
            &gt,
            &y,
            &model,
            &cell,
            &MetricOptions::default(),
            &mut TrainingCache::new(),
        )
        .expect("desk run");
        println!(
            "{:<20} psnr {:.3} ssim {:.4} (bicubic {:.3} / {:.4}) {:.1}s",
            row.cell,
            row.psnr,
            row.ssim,
            row.bicubic_psnr,
            row.bicubic_ssim,
            start.elapsed().as_secs_f64()
        );
    }
}
