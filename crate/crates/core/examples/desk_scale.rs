//! Compresses the toy CNN on the builtin bars set and prints the summary.

use std::time::Instant;

use sparsedeploy::model::{toy_cnn_layers, TOY_INPUT};
use sparsedeploy::pipeline::{compress, Event, PipelineConfig};
use sparsedeploy::synth::{bars_split, BarsConfig, BARS_CLASSES};
use sparsedeploy::trainer::init_model;

fn main() -> sparsedeploy::Result<()> {
    let split = bars_split(&BarsConfig::default());
    let model = init_model(TOY_INPUT, toy_cnn_layers(BARS_CLASSES), 42)?;
    let mut cfg = PipelineConfig::default();
    cfg.search.tolerated_acc_loss = 0.02;
    let start = Instant::now();
    let out = compress(&model, &split, &cfg, |e| match e {
        Event::Trial(t) => println!("trial sparsity {:.4} accuracy {:.4} accepted {}", t.sparsity, t.accuracy, t.accepted),
        other => println!("{other:?}"),
    })?;
    let s = &out.summary;
    println!(
        "initial {:.4} final {:.4} sparsity {:.4} payload ratio {:.3} in {:.1?}",
        s.initial_accuracy,
        s.final_accuracy,
        s.final_sparsity,
        s.payload_ratio(),
        start.elapsed()
    );
    Ok(())
}
