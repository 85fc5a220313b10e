mod common;

use netdep::experiments::default_network;
use netdep::graph::{generate_random_network, Network, RandomModel};
use netdep::rng;
use netdep::simulate::{self, LatentConfig, Transmission, TransmissionConfig, TransmissionRule};

fn small_network() -> Network {
    default_network(60, 4.0, 5).unwrap()
}

#[test]
fn transmission_grand_mean_is_zero() {
    let net = small_network();
    let n = net.node_count();
    let reps = 500;
    for (a, sigma, kappa) in [(0.5, 0.5, 3), (0.9, 0.05, 3), (0.2, 2.0, 1), (1.0, 0.5, 5)] {
        let process = Transmission::new(a, sigma);
        let mut total = 0.0;
        for r in 0..reps {
            let cfg = TransmissionConfig { process, kappa, seed: rng::derive_seed(77, &[r]) };
            total += simulate::direct_transmission(&net, &cfg).unwrap().as_slice().iter().sum::<f64>();
        }
        let grand = total / (reps as f64 * n as f64);
        // Exact SE of the grand mean: sqrt(1ᵀΣ1 / reps) / n.
        let sum_cov = process.covariance(&net, kappa).sum();
        let se = (sum_cov / reps as f64).sqrt() / n as f64;
        assert!(grand.abs() < 4.0 * se, "a={a} sigma={sigma}: {grand} vs se {se}");
    }
}

#[test]
fn neighbor_covariance_monte_carlo_grows_and_matches_closed_form() {
    let net = small_network();
    let process = Transmission::default();
    let reps = 2000;
    let mut acc = [0.0; 4];
    for r in 0..reps {
        let states = process.path(&net, 3, &mut rng::stream(91, &[r]));
        for (k, y) in states.iter().enumerate() {
            acc[k] += net.edges().iter().map(|&(i, j)| y[i] * y[j]).sum::<f64>();
        }
    }
    let m = net.edge_count() as f64 * reps as f64;
    let mc: Vec<f64> = acc.iter().map(|s| s / m).collect();
    for k in 1..4 {
        assert!(mc[k] >= mc[k - 1], "{mc:?}");
        let c = process.covariance(&net, k);
        let exact = net.edges().iter().map(|&(i, j)| c[(i, j)]).sum::<f64>() / net.edge_count() as f64;
        assert!((mc[k] - exact).abs() < 0.02, "kappa {k}: {} vs {exact}", mc[k]);
    }
}

#[test]
fn generators_are_bit_reproducible() {
    let net = small_network();
    for rule in [TransmissionRule::NeighborMean, TransmissionRule::NeighborSum] {
        let cfg = TransmissionConfig { process: Transmission::new(0.7, 0.3).with_rule(rule), kappa: 4, seed: 12 };
        assert_eq!(simulate::direct_transmission(&net, &cfg).unwrap(), simulate::direct_transmission(&net, &cfg).unwrap());
    }
    let lc = LatentConfig { length_scale: 2.0, noise: 0.5, seed: 3 };
    assert_eq!(simulate::latent_variable_outcome(&net, &lc).unwrap(), simulate::latent_variable_outcome(&net, &lc).unwrap());
    let sw = RandomModel::SmallWorld { k: 4, rewire: 0.1 };
    assert_eq!(generate_random_network(50, sw, 8, true).unwrap(), generate_random_network(50, sw, 8, true).unwrap());
    let other = TransmissionConfig { seed: 13, ..TransmissionConfig::default() };
    assert_ne!(
        simulate::direct_transmission(&net, &other).unwrap(),
        simulate::direct_transmission(&net, &TransmissionConfig::default()).unwrap()
    );
}

#[test]
fn latent_outcome_is_network_dependent() {
    // Neighbors share smoothed traits, so the average Moran's I over draws
    // should clear its null mean by several standard errors.
    use netdep::deptest;
    use netdep::graph::WeightMatrix;
    let net = small_network();
    let w = WeightMatrix::adjacency(&net).unwrap();
    let draws = 50;
    let (mut excess, mut var) = (0.0, 0.0);
    for s in 0..draws {
        let y = simulate::latent_variable_outcome(&net, &LatentConfig { length_scale: 1.5, noise: 0.3, seed: s }).unwrap();
        let m = deptest::null_moments(&y, &w).unwrap();
        excess += deptest::morans_i(&y, &w).unwrap() - m.mean_i;
        var += m.var_i;
    }
    let se = var.sqrt() / draws as f64;
    let excess = excess / draws as f64;
    assert!(excess > 4.0 * se, "{excess} vs se {se}");
}

#[test]
fn monotone_pair_sign_is_a_fair_coin() {
    let seeds = 500u64;
    let positive = (0..seeds)
        .filter(|&s| {
            let (x, y) = simulate::monotone_pair(100, s).unwrap();
            netdep::stats::pearson(x.as_slice(), y.as_slice()) == 1.0
        })
        .count();
    let (lo, hi) = common::binomial_band(seeds, 0.5, 0.99);
    let frac = positive as f64 / seeds as f64;
    assert!(lo <= frac && frac <= hi, "{frac} outside [{lo}, {hi}]");
}

#[test]
fn small_world_is_connected_lattice_when_not_rewired() {
    let net = generate_random_network(20, RandomModel::SmallWorld { k: 4, rewire: 0.0 }, 0, true).unwrap();
    assert_eq!(net.edge_count(), 40);
    assert!(net.degrees().iter().all(|&d| d == 4));
}
