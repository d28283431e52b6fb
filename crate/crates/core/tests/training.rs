use bna::graph::synthetic::{sbm_dataset, SbmSpec};
use bna::graph::Graph;
use bna::process::StickBreakingPrior;
use bna::rng::substream;
use bna::train::{elbo_step, parse_grid, sweep, train, train_observed, TrainConfig};

fn fixture() -> Graph {
    sbm_dataset(&SbmSpec::default(), &mut substream(7, &[]))
}

#[test]
fn negative_elbo_trends_down_over_first_twenty_epochs() {
    let g = fixture();
    let cfg = TrainConfig {
        epochs: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    let prior = StickBreakingPrior::new(cfg.alpha, cfg.beta).unwrap();
    // Low-variance estimate: many samples, the same noise at every epoch.
    let estimator = TrainConfig {
        samples: 64,
        ..cfg.clone()
    };
    let mut losses = Vec::new();
    train_observed(&g, &cfg, |_, params, posterior| {
        let step = elbo_step(g.adjacency(), &g, params, posterior, &prior, &estimator, 12_345).unwrap();
        losses.push(step.loss);
    })
    .unwrap();
    assert_eq!(losses.len(), 20);
    let ma: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for w in ma.windows(2) {
        assert!(w[1] <= w[0], "moving average rose: {ma:?}");
    }
}

#[test]
fn same_seed_gives_identical_history() {
    let g = fixture();
    let cfg = TrainConfig {
        epochs: 15,
        hidden: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&g, &cfg).unwrap();
    let b = train(&g, &cfg).unwrap();
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    assert_eq!(a.params, b.params);
    let c = train(&g, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.history.to_csv(), c.history.to_csv());
}

#[test]
fn sweep_row_count_matches_grid() {
    let g = fixture();
    let base = TrainConfig {
        epochs: 4,
        hidden: 8,
        truncation: 4,
        ..TrainConfig::default()
    };
    let grid = parse_grid("alpha=1,5;beta=1,2;S=1,3").unwrap();
    let rows = sweep(&g, &base, &grid, 1);
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.result.is_ok()));
}

#[test]
fn history_has_one_row_per_epoch() {
    let g = fixture();
    let cfg = TrainConfig {
        epochs: 6,
        hidden: 8,
        truncation: 4,
        ..TrainConfig::default()
    };
    let out = train(&g, &cfg).unwrap();
    let csv = out.history.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("epoch,train_loss,val_acc,val_loss,pi_1,pi_2,pi_3,pi_4,lns_mode\n"));
    for r in out.history.records() {
        assert!(r.mean_pi.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn normalization_setting_reaches_training() {
    let g = fixture();
    let cfg = TrainConfig {
        epochs: 3,
        hidden: 8,
        truncation: 3,
        ..TrainConfig::default()
    };
    let sym = train(&g, &cfg).unwrap();
    let row = train(
        &g,
        &TrainConfig {
            normalization: bna::graph::Normalization::RowStochastic,
            ..cfg
        },
    )
    .unwrap();
    assert_ne!(sym.history.to_csv(), row.history.to_csv());
}
