use fedsparsify_core::data::{load_fashion_mnist, write_idx};
use fedsparsify_core::federation::{DataSource, DatasetConfig};
use fedsparsify_core::metrics::{evaluate, load_checkpoint, save_checkpoint};
use fedsparsify_core::{ExperimentConfig, Federation, LabeledDataset, StrategyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Images whose brightest pixel encodes the label.
fn bright_pixel_set(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 16);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.gen_range(0..10u32);
        let mut row: Vec<f64> = (0..16).map(|_| f64::from(rng.gen_range(0..60u8)) / 255.0).collect();
        row[y as usize] = 1.0;
        features.extend(row);
        labels.push(y);
    }
    LabeledDataset::new(features, labels, 16, 10).unwrap()
}

#[test]
fn idx_directory_to_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let train = bright_pixel_set(400, 1);
    let test = bright_pixel_set(100, 2);
    write_idx(
        &train,
        &dir.path().join("train-images-idx3-ubyte.gz"),
        &dir.path().join("train-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    write_idx(
        &test,
        &dir.path().join("t10k-images-idx3-ubyte"),
        &dir.path().join("t10k-labels-idx1-ubyte"),
    )
    .unwrap();
    let splits = load_fashion_mnist(dir.path()).unwrap();
    assert_eq!(splits.train.len(), 400);
    assert_eq!(splits.train.labels(), train.labels());
    assert_eq!(splits.test.features(), test.features());

    let mut cfg = ExperimentConfig::fashion_mnist(dir.path(), StrategyKind::FedSparsifyLocal);
    cfg.dataset = DatasetConfig::new(DataSource::FashionMnist { dir: dir.path().into() });
    cfg.hidden_layers = vec![12];
    cfg.rounds = 20;
    cfg.num_clients = 4;
    cfg.learning_rate = 0.1;
    cfg.strategy.fraction = 0.05;
    cfg.strategy.frequency = 1;
    let mut fed = Federation::from_config(cfg, std::path::Path::new("/")).unwrap();
    let records = fed.run().unwrap();
    let last = records.last().unwrap();
    assert!(last.accuracy > 0.9, "accuracy {}", last.accuracy);
    assert!(last.sparsity > 0.3, "sparsity {}", last.sparsity);

    let path = dir.path().join("model.ckpt");
    save_checkpoint(&fed.checkpoint(), &path).unwrap();
    let ckpt = load_checkpoint(&path).unwrap();
    assert_eq!(ckpt.params, *fed.params());
    let eval = evaluate(&ckpt.arch, &ckpt.params, &ckpt.mask, &splits.test).unwrap();
    assert_eq!(eval.accuracy, last.accuracy);
    assert_eq!(eval.loss, last.loss);
}

#[test]
fn tiny_network_fits_separable_data() {
    // 10 inputs, 8 hidden units, 2 classes; one client, full batch view.
    let spec = fedsparsify_core::data::SyntheticSpec::new(120, 10, 2, 3);
    let mut cfg = ExperimentConfig::fashion_mnist("unused", StrategyKind::FedAvgDense);
    cfg.dataset = DatasetConfig::new(DataSource::Synthetic(spec.clone()));
    cfg.hidden_layers = vec![8];
    cfg.num_clients = 1;
    cfg.rounds = 20;
    cfg.local_epochs = 1;
    cfg.learning_rate = 0.1;
    let splits = fedsparsify_core::data::synthetic_blobs(&spec);
    let train = splits.train.clone();
    let mut fed = Federation::new(cfg, splits).unwrap();
    fed.run().unwrap();
    let eval = evaluate(fed.architecture(), fed.params(), fed.mask(), &train).unwrap();
    assert_eq!(eval.accuracy, 1.0);
}
