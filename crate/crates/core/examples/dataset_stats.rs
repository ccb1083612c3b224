// Load a small signed edge list, print its statistics and count how many
// edges pass the (p, q) embeddedness gate.
//
// ```text
// cargo run --example dataset_stats
// ```

use std::io::Cursor;

use peersign::eval::count_threshold_edges;
use peersign::graph::{load_edge_list, EdgeListFormat, GraphStats};
use peersign::{OpinionVariant, PeerPolicy};

const EDGES: &str = "\
# src dst sign
a b 1
a c 1
a d -1
b c 1
b d -1
c d -1
d a 1
e a 1
e b -1
e c 1
a e 1
";

pub fn run_example() -> peersign::Result<()> {
    let g = load_edge_list(Cursor::new(EDGES), &EdgeListFormat::default())?;
    println!("{}", GraphStats::TSV_HEADER);
    println!("{}", g.stats().to_tsv_row());

    for (p, q) in [(0, 0), (1, 1), (2, 2), (3, 3)] {
        let policy = PeerPolicy { variant: OpinionVariant::StandardPq, p, q };
        println!("p={p} q={q}: {} gated edges", count_threshold_edges(&g, &policy));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
