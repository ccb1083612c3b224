// Generate a graph from hidden per-node predictors, train on it and check
// how well the learned predictors reproduce held-out signs.

use peersign::eval::{evaluate, generate_planted};
use peersign::graph::split_edges;
use peersign::trainer::train_all;
use peersign::{PlantedParams, TrainConfig};

pub fn run_example() -> peersign::Result<()> {
    for noise in [0.0, 0.1] {
        let params = PlantedParams { noise, ..PlantedParams::default() };
        let (g, model) = generate_planted(&params, 7)?;
        let split = split_edges(g.edges(), 0.1, 7)?;
        let config = TrainConfig { seed: 7, ..TrainConfig::default() };
        let trained = train_all(&g, &split, &config)?;

        let test: Vec<_> = split.test.iter().copied().filter(|e| model.is_planted(e.src)).collect();
        let learned = evaluate(&g, &trained.predictors, &test, &config.policy);
        let hidden = evaluate(&g, &model.predictors(), &test, &config.policy);
        println!(
            "noise {noise:.1}: learned {:.2}%  hidden model {:.2}%  ({} test edges)",
            100.0 * learned.accuracy,
            100.0 * hidden.accuracy,
            learned.tested
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
