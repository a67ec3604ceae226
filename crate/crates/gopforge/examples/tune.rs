// Scratch tuning harness; removed before release.
use gopforge::*;
use std::time::Instant;

fn blobs_ds(seed: u64, center_box: f64, noise: f64) -> Dataset {
    let ds = make_synthetic(&SyntheticSpec::Blobs {
        samples: 2000, dim: 20, classes: 4, center_box, noise,
    }, seed).unwrap();
    split_dataset(ds, (0.6, 0.2, 0.2), seed).unwrap()
}

fn cfg4(epochs: usize, lr: f64, dropout: f64, seed: u64, workers: usize) -> ProgressionConfig {
    ProgressionConfig {
        algorithm: AlgorithmKind::PopFast,
        template: NetworkTemplate::new(20, vec![40, 40, 40], 4).unwrap(),
        train: TrainConfig {
            epochs, lr_initial: lr, lr_drop_every: epochs * 2 / 3, lr_drop_factor: 0.1,
            batch_size: 32, dropout_rate: dropout,
            regularizer: Regularizer::WeightDecay(1e-4),
            loss: LossKind::Mse, momentum: 0.0, track_accuracy: false,
        },
        finetune: Some(TrainConfig {
            epochs: epochs / 2, lr_initial: lr / 100.0, lr_drop_every: epochs / 4, lr_drop_factor: 0.1,
            batch_size: 32, dropout_rate: dropout,
            regularizer: Regularizer::WeightDecay(1e-4),
            loss: LossKind::Mse, momentum: 0.0, track_accuracy: false,
        }),
        stopping: StoppingRule::default(),
        memory: None,
        output_activation: OutputActivation::Softmax,
        run_seed: seed,
        workers,
        standardize: true,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("c4");
    match mode {
        "c4" => {
            for (cb, noise) in [(1.2, 1.0), (1.5, 1.0)] {
                for epochs in [30usize, 50] {
                    for lr in [0.1, 0.2] {
                        let mut accs = vec![];
                        let t0 = Instant::now();
                        for seed in 1..=3u64 {
                            let ds = blobs_ds(seed, cb, noise);
                            let cfg = cfg4(epochs, lr, 0.0, seed, 2);
                            let (_, rep) = run_progression(&ds, &cfg).unwrap();
                            accs.push((rep.test_accuracy.unwrap(), rep.steps.len()));
                        }
                        let mut a: Vec<f64> = accs.iter().map(|x| x.0).collect();
                        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                        println!("cb={} noise={} E={} lr={} accs={:?} median={:.4} time={:.1}s",
                                 cb, noise, epochs, lr, accs, a[1], t0.elapsed().as_secs_f64());
                    }
                }
            }
        }
        _ => {}
    }
}
