// Turn user-item star ratings into a bipartite signed graph and write it as
// an edge list.

use std::io::Cursor;

use peersign::graph::{load_ratings, write_edge_list, DEFAULT_NEGATIVE_THRESHOLD};

// user item rating timestamp
const RATINGS: &str = "\
196\t242\t3\t881250949
186\t302\t3\t891717742
22\t377\t1\t878887116
244\t51\t2\t880606923
166\t346\t1\t886397596
298\t474\t4\t884182806
115\t265\t2\t881171488
253\t465\t5\t891628467
305\t451\t3\t886324817
6\t86\t3\t883603013
196\t302\t5\t881250950
";

pub fn run_example() -> peersign::Result<()> {
    let g = load_ratings(Cursor::new(RATINGS), DEFAULT_NEGATIVE_THRESHOLD)?;
    let stats = g.stats();
    println!(
        "{} nodes, {} edges, {:.1}% negative (ratings <= {DEFAULT_NEGATIVE_THRESHOLD})",
        stats.nodes,
        stats.edges,
        100.0 * stats.negative as f64 / stats.edges as f64
    );
    let mut out = Vec::new();
    write_edge_list(&g, &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
