// Build a random QUBO, solve it exactly and with tabu search, and compare.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peersign::qubo::{solve_exact, solve_tabu};
use peersign::{QuboInstance, TabuParams};

fn random_instance(m: usize, seed: u64) -> QuboInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let linear = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut q = QuboInstance::new(0.0, linear);
    for i in 0..m {
        for j in i + 1..m {
            q.set_pair(i, j, rng.gen_range(-2.0..2.0));
        }
    }
    q
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn run_example() -> peersign::Result<()> {
    for (m, seed) in [(8, 1), (14, 2), (20, 3)] {
        let q = random_instance(m, seed);
        let exact = solve_exact(&q)?;
        let tabu = solve_tabu(&q, &TabuParams::for_size(m, seed));
        println!("m={m:2}  exact {:9.4} {}", exact.objective, bit_string(&exact.bits));
        println!("      tabu  {:9.4} {}", tabu.objective, bit_string(&tabu.bits));
    }

    // beyond the exact budget only tabu applies
    let q = random_instance(60, 4);
    assert!(solve_exact(&q).is_err());
    let tabu = solve_tabu(&q, &TabuParams::for_size(60, 4));
    println!("m=60  tabu  {:9.4} ({} bits set)", tabu.objective, tabu.set_count());
    Ok(())
}

#[allow(dead_code)]
fn main() -> peersign::Result<()> {
    run_example()
}
