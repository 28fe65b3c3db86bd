//! Seeded random streams and random test instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::Chain;
use crate::partition::Partition;

/// The random stream for `(seed, index)`. Streams for distinct indices are independent,
/// so per-trajectory results do not depend on how work is scheduled.
pub fn rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// A random irreducible chain on `n` states labelled `s0, s1, …`.
///
/// Non-reversible chains contain a random Hamiltonian cycle plus extra directed edges
/// with probability `density`. Reversible chains are built from a random spanning tree
/// plus extra undirected edges, with symmetric conductances and random stationary weights.
pub fn random_chain<R: Rng>(rng: &mut R, n: usize, density: f64, reversible: bool) -> Chain {
    let labels: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut rate = vec![vec![0.0f64; n]; n];
    if reversible {
        let weight: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut pairs = Vec::new();
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            pairs.push((order[k], parent));
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(density) {
                    pairs.push((i, j));
                }
            }
        }
        for (i, j) in pairs {
            if rate[i][j] > 0.0 {
                continue;
            }
            let c = rng.gen_range(0.1..1.0);
            rate[i][j] = c / weight[i];
            rate[j][i] = c / weight[j];
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for k in 0..n {
            let (i, j) = (order[k], order[(k + 1) % n]);
            rate[i][j] = rng.gen_range(0.1..3.0);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && rate[i][j] == 0.0 && rng.gen_bool(density) {
                    rate[i][j] = rng.gen_range(0.1..3.0);
                }
            }
        }
    }
    let mut edges = Vec::new();
    for (i, row) in rate.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if r > 0.0 {
                edges.push((i, j, r));
            }
        }
    }
    Chain::from_indexed(labels, edges).expect("random chain is irreducible by construction")
}

/// Two disjoint nonempty random subsets whose union leaves at least one state free
/// when `n >= 3`.
pub fn random_disjoint_pair<R: Rng>(rng: &mut R, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let room = if n >= 3 { n - 1 } else { n };
    let a_len = rng.gen_range(1..room);
    let b_len = rng.gen_range(1..=room - a_len);
    let mut a = order[..a_len].to_vec();
    let mut b = order[a_len..a_len + b_len].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// A random partition into `valleys` nonempty valleys plus a possibly empty separating set.
pub fn random_partition<R: Rng>(rng: &mut R, n: usize, valleys: usize) -> Partition {
    assert!(valleys >= 1 && valleys <= n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut sets: Vec<Vec<usize>> = order[..valleys].iter().map(|&i| vec![i]).collect();
    for &i in &order[valleys..] {
        let k = rng.gen_range(0..=valleys);
        if k < valleys {
            sets[k].push(i);
        }
    }
    for s in sets.iter_mut() {
        s.sort_unstable();
    }
    Partition::new(n, sets).expect("valid by construction")
}

/// A random vector with entries uniform in `[-1, 1)`.
pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
