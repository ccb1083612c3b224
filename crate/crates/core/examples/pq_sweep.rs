// Drive the command front end in-process: synthesise a planted graph, then
// sweep the (p, q) grid over it.

use peersign::cli::run_with_args;

pub fn run_example() -> peersign::Result<()> {
    let dir = std::env::temp_dir().join(format!("peersign-pq-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let graph = dir.join("planted.txt");
    let graph = graph.to_str().expect("utf-8 temp path");

    let mut out = Vec::new();
    let code = run_with_args(["peersign", "synth", "--out", graph, "--nodes", "80", "--targets-per-node", "50"], &mut out);
    assert_eq!(code, 0);
    let code = run_with_args(
        ["peersign", "sweep", "--dataset", graph, "--p-list", "0,60,70", "--q-list", "0,5,6", "--workers", "2"],
        &mut out,
    );
    assert_eq!(code, 0);
    print!("{}", String::from_utf8_lossy(&out));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
