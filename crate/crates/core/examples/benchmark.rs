//! Run the synthetic benchmark over several seeds.
//!
//! `cargo run --release --example benchmark -- [config.toml] [seeds]`

use std::time::Instant;

use latentkd::eval::paired_t_test;
use latentkd::pipeline::{run_benchmark_seed, standard_spec, TrainConfig};

fn main() -> latentkd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first() {
        Some(p) if !p.is_empty() => TrainConfig::load(p.as_ref())?,
        _ => TrainConfig::default(),
    };
    let seeds: u64 = args.get(1).map(|s| s.parse().expect("seed count")).unwrap_or(5);
    let (mut kd, mut hard) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let t = Instant::now();
        let o = run_benchmark_seed(&cfg, &standard_spec(seed))?;
        println!(
            "seed {seed}: pre {:.3} kd {:.3} hard {:.3} teacher {:.3} | 9neg student {:.3} teacher {:.3} | {:.1}s",
            o.pretrained_recall,
            o.distilled_recall,
            o.hard_label_recall,
            o.teacher_recall,
            o.student_validation,
            o.teacher_validation,
            t.elapsed().as_secs_f64()
        );
        for r in &o.reports {
            println!(
                "  {:?} {:.4} -> {:.4} ({} steps)",
                r.stage, r.initial_loss, r.final_loss, r.steps
            );
        }
        kd.push(o.distilled_recall);
        hard.push(o.hard_label_recall);
    }
    if kd.len() > 1 {
        println!("paired one-sided: {:?}", paired_t_test(&kd, &hard)?);
    }
    Ok(())
}
