// The three evaluation regimes on one skewed planted graph: raw accuracy,
// error averaged over the two sign classes, and retraining on a
// sign-balanced sample.

use peersign::eval::{evaluate, evaluate_averaged, evaluate_balanced, generate_planted};
use peersign::graph::split_edges;
use peersign::trainer::train_all;
use peersign::{PlantedParams, TrainConfig};

pub fn run_example() -> peersign::Result<()> {
    let params = PlantedParams {
        nodes: 120,
        targets_per_node: 80,
        base_positive_rate: 0.8,
        noise: 0.05,
        ..PlantedParams::default()
    };
    let (g, _) = generate_planted(&params, 3)?;
    let config = TrainConfig { seed: 3, ..TrainConfig::default() };
    let split = split_edges(g.edges(), 0.1, config.seed)?;
    let trained = train_all(&g, &split, &config)?;

    let raw = evaluate(&g, &trained.predictors, &split.test, &config.policy);
    let averaged = evaluate_averaged(&g, &trained.predictors, &split.test, &config.policy, config.seed)?;
    let balanced = evaluate_balanced(&g, &config, 0.1, config.seed)?;
    for r in [&raw, &averaged, &balanced] {
        println!("{}", r.summary());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
