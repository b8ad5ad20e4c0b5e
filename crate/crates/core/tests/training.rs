use featmom::adam::{AdamConfig, AdamState};
use featmom::dense::{Activation, RngState};
use featmom::graph::{generate_sbm, partition_greedy_bfs, Graph, NodeData, SbmSpec};
use featmom::ib::{IBConfig, IBTrainer};
use featmom::layers::{LayerKind, Model};
use featmom::ob::{OBConfig, OBMode, OBTrainer};

fn data(seed: u64) -> (Graph, NodeData<f64>) {
    let spec = SbmSpec { blocks: 2, block_size: 50, p_in: 0.2, p_out: 0.02, feature_dim: 8 };
    generate_sbm(&spec, seed).unwrap()
}

fn model(seed: u64) -> Model<f64> {
    Model::init(LayerKind::MeanSage, Activation::Relu, &[8, 16, 2], true, &mut RngState::new(seed)).unwrap()
}

#[test]
fn in_batch_momentum_fits_sbm() {
    let (g, d) = data(7);
    let m = model(7);
    let adam = AdamState::new(m.num_params(), AdamConfig::default());
    let cfg = IBConfig { neighbor_sizes: vec![2, 2], batch_size: 10, beta0: vec![0.4, 0.4], epochs: 100, seed: 7 };
    let mut tr = IBTrainer::new(cfg, m, adam, g.num_nodes()).unwrap();
    let mut last = None;
    for _ in 0..100 {
        last = Some(tr.train_epoch(&g, &d).unwrap());
    }
    let last = last.unwrap();
    assert!(last.train_acc >= 0.95, "{last:?}");
    assert!(last.loss.is_finite());
}

#[test]
fn out_of_batch_momentum_fits_sbm_in_both_modes() {
    let (g, d) = data(7);
    let part = partition_greedy_bfs(&g, 4, 7).unwrap();
    for mode in [OBMode::GraphFmOb, OBMode::GnnAutoScale] {
        let m = model(8);
        let adam = AdamState::new(m.num_params(), AdamConfig::default());
        let cfg = OBConfig {
            clusters_per_batch: 1,
            beta0: vec![0.3, 0.3],
            push_threshold: 2,
            mode,
            momentum_in_batch: false,
            epochs: 100,
            seed: 7,
        };
        let mut tr = OBTrainer::new(cfg, part.clone(), m, adam).unwrap();
        let mut last = None;
        for _ in 0..100 {
            last = Some(tr.train_epoch(&g, &d).unwrap());
        }
        let last = last.unwrap();
        assert!(last.train_acc >= 0.95, "{mode:?} {last:?}");
        assert_eq!(last.steps, 400);
        let s = tr.staleness(&g, &d, &tr.model).unwrap();
        assert_eq!(s.layer_mean.len(), 2);
    }
}
