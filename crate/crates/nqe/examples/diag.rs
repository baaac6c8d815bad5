// temporary diagnostic
use nqe::encoder::EncoderConfig;
use nqe::query::QueryType;
use nqe::sampler::{sample_query, synthetic_block_graph, GroundedQuery, SyntheticConfig};
use nqe::store::Split;
use nqe::train::{train, TrainConfig};

fn main() {
    let g = synthetic_block_graph(&SyntheticConfig {
        entities: 30,
        relations: 4,
        attributes: 2,
        blocks_per_relation: 2,
        block_size: 4,
        seed: 17,
        ..SyntheticConfig::default()
    });
    let q = sample_query(QueryType::P1, &g, Split::Train, 0).unwrap();
    let single = GroundedQuery {
        easy: std::iter::once(q.easy.iter().next().unwrap()).collect(),
        ..q.clone()
    };
    for lr in [3e-2] {
        let config = TrainConfig {
            model: EncoderConfig { dim: 16, layers: 1, heads: 1, ffn_dim: 16, ..EncoderConfig::default() },
            epsilon: 0.0001,
            learning_rate: lr,
            batch_size: 8,
            epochs: 400,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train(&g, &[single.clone()], &config).unwrap();
        let pick: Vec<String> = out
            .loss_curve
            .iter()
            .step_by(100)
            .map(|(e, l)| format!("{e}:{l:.4}"))
            .collect();
        println!("lr={lr}: {}  final={:.5}", pick.join(" "), out.loss_curve.last().unwrap().1);
    }
}
