//! Shared test support: random model generators and brute-force oracles.
//!
//! The oracles evaluate the utility and Lyapunov function from their
//! definitions and maximise/minimise them by exhaustive grid search, so they
//! share no code with the solvers under test.
#![allow(dead_code)]

use alphafair_core::{Event, EventPath, NetworkModel, Topology, TrafficParams};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

pub const ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random incidence matrix with `resources` rows and `routes` columns,
/// every column nonempty and full row rank.
pub fn random_topology(rng: &mut impl Rng, resources: usize, routes: usize) -> Topology {
    assert!(resources <= routes);
    loop {
        let rows: Vec<Vec<u8>> = (0..resources)
            .map(|_| (0..routes).map(|_| u8::from(rng.random_bool(0.5))).collect())
            .collect();
        let capacities = (0..resources).map(|_| rng.random_range(0.5..2.0)).collect();
        if let Ok(topo) = Topology::from_rows(&rows, capacities) {
            if topo.validate().is_valid() {
                return topo;
            }
        }
    }
}

/// Traffic with loads scaled so the busiest resource sits at `peak` of its
/// capacity (`peak = 1` makes it critical).
pub fn traffic_for(rng: &mut impl Rng, topo: &Topology, alpha: f64, peak: f64) -> TrafficParams {
    let routes = topo.route_count();
    let rho: Vec<f64> = (0..routes).map(|_| rng.random_range(0.2..1.0)).collect();
    let load = topo.apply(&rho);
    let worst = (0..topo.resource_count())
        .map(|j| load[j] / topo.capacity(j))
        .fold(0.0f64, f64::max);
    let service_rates: Vec<f64> = (0..routes).map(|_| rng.random_range(0.5..2.0)).collect();
    TrafficParams {
        arrival_rates: rho
            .iter()
            .zip(&service_rates)
            .map(|(r, mu)| r * peak / worst * mu)
            .collect(),
        service_rates,
        weights: (0..routes).map(|_| rng.random_range(0.5..2.0)).collect(),
        alpha,
    }
}

/// A random valid model with at most `max_routes` routes and
/// `max_resources` resources.
pub fn random_model(rng: &mut impl Rng, max_routes: usize, max_resources: usize, alpha: f64) -> NetworkModel {
    let resources = rng.random_range(1..=max_resources);
    let routes = rng.random_range(resources..=max_routes.max(resources));
    let topo = random_topology(rng, resources, routes);
    let peak = rng.random_range(0.5..=1.0);
    let traffic = traffic_for(rng, &topo, alpha, peak);
    NetworkModel::new(topo, traffic).expect("generated model is valid")
}

/// A model on a random topology where every resource is critical:
/// loads are drawn first and the capacities set to `A ρ`.
pub fn random_critical_model(rng: &mut impl Rng, resources: usize, routes: usize, alpha: f64) -> NetworkModel {
    loop {
        let topo = random_topology(rng, resources, routes);
        let rho: Vec<f64> = (0..routes).map(|_| rng.random_range(0.2..0.8)).collect();
        let capacities = topo.apply(&rho);
        let rows: Vec<Vec<u8>> = (0..resources)
            .map(|j| (0..routes).map(|i| topo.entry(j, i)).collect())
            .collect();
        let topo = Topology::from_rows(&rows, capacities).unwrap();
        let service_rates: Vec<f64> = (0..routes).map(|_| rng.random_range(0.5..2.0)).collect();
        let traffic = TrafficParams {
            arrival_rates: rho.iter().zip(&service_rates).map(|(r, mu)| r * mu).collect(),
            service_rates,
            weights: (0..routes).map(|_| rng.random_range(0.5..2.0)).collect(),
            alpha,
        };
        if let Ok(model) = NetworkModel::new(topo, traffic) {
            if model.critical_resources().len() == resources {
                return model;
            }
        }
    }
}

/// A state in `[0, max)^I` where each component is zero with probability
/// `zero_prob`, never the all-zero state.
pub fn random_state(rng: &mut impl Rng, routes: usize, max: f64, zero_prob: f64) -> Vec<f64> {
    loop {
        let n: Vec<f64> = (0..routes)
            .map(|_| {
                if rng.random_bool(zero_prob) {
                    0.0
                } else {
                    rng.random_range(0.05..max)
                }
            })
            .collect();
        if n.iter().any(|&x| x > 0.0) {
            return n;
        }
    }
}

/// Every valid topology with at most `max_routes` routes, one per class of
/// row permutations, with unit capacities.
pub fn small_topologies(max_routes: usize) -> Vec<Topology> {
    let mut out = Vec::new();
    for routes in 1..=max_routes {
        let columns: Vec<u32> = (1..(1u32 << routes)).collect();
        for resources in 1..=routes {
            // rows as bitmasks over routes, strictly increasing to fix order
            let mut rows = vec![0usize; resources];
            enumerate_rows(&columns, &mut rows, 0, 0, &mut |chosen| {
                let matrix: Vec<Vec<u8>> = chosen
                    .iter()
                    .map(|&mask| (0..routes).map(|i| ((columns[mask] >> i) & 1) as u8).collect())
                    .collect();
                if let Ok(topo) = Topology::from_rows(&matrix, vec![1.0; resources]) {
                    if topo.validate().is_valid() {
                        out.push(topo);
                    }
                }
            });
        }
    }
    out
}

fn enumerate_rows(columns: &[u32], rows: &mut [usize], depth: usize, from: usize, visit: &mut impl FnMut(&[usize])) {
    if depth == rows.len() {
        visit(rows);
        return;
    }
    for k in from..columns.len() {
        rows[depth] = k;
        enumerate_rows(columns, rows, depth + 1, k + 1, visit);
    }
}

pub fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).unwrap()
}

/// `G_n(Λ)` over the routes with `n_i > 0`, straight from its definition.
pub fn utility(model: &NetworkModel, n: &[f64], lambda: &[f64]) -> f64 {
    let alpha = model.alpha();
    let mut total = 0.0;
    for i in 0..n.len() {
        if n[i] <= 0.0 {
            continue;
        }
        let kappa = model.weights()[i];
        total += if alpha == 1.0 {
            kappa * n[i] * lambda[i].ln()
        } else {
            if alpha > 1.0 && lambda[i] <= 0.0 {
                return f64::NEG_INFINITY;
            }
            kappa * n[i].powf(alpha) * lambda[i].powf(1.0 - alpha) / (1.0 - alpha)
        };
    }
    total
}

/// Largest value the route `last` can take given the other rates.
fn headroom(model: &NetworkModel, lambda: &[f64], last: usize) -> f64 {
    let topo = model.topology();
    let mut room = f64::INFINITY;
    for j in 0..topo.resource_count() {
        if !topo.uses(j, last) {
            continue;
        }
        let used: f64 = (0..lambda.len())
            .filter(|&i| i != last && topo.uses(j, i))
            .map(|i| lambda[i])
            .sum();
        room = room.min(topo.capacity(j) - used);
    }
    room
}

fn feasible(model: &NetworkModel, lambda: &[f64]) -> bool {
    let topo = model.topology();
    let load = topo.apply(lambda);
    (0..topo.resource_count()).all(|j| load[j] <= topo.capacity(j) + 1e-12)
}

/// Grid-search maximiser of `G_n` over the capacity region, for up to three
/// positive routes. `G_n` increases in every positive component, so the last
/// positive route always takes its full headroom and the grid runs over the
/// others with spacing `h`.
pub fn grid_allocation(model: &NetworkModel, n: &[f64], h: f64) -> Vec<f64> {
    let positive: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0.0).collect();
    assert!(!positive.is_empty() && positive.len() <= 3, "oracle handles 1–3 positive routes");
    let top = model.topology().max_capacity();
    let steps = (top / h).floor() as usize;
    let mut lambda = vec![0.0; n.len()];
    let mut best = (f64::NEG_INFINITY, lambda.clone());
    let (free, last) = positive.split_at(positive.len() - 1);
    let last = last[0];
    let mut visit = |lambda: &mut Vec<f64>| {
        let room = headroom(model, lambda, last);
        if room <= 0.0 {
            return;
        }
        lambda[last] = room;
        if !feasible(model, lambda) {
            return;
        }
        let value = utility(model, n, lambda);
        if value > best.0 {
            best = (value, lambda.clone());
        }
    };
    match free.len() {
        0 => visit(&mut lambda),
        1 => {
            for a in 1..=steps {
                lambda[free[0]] = a as f64 * h;
                visit(&mut lambda);
            }
        }
        _ => {
            for a in 1..=steps {
                lambda[free[0]] = a as f64 * h;
                lambda[free[1]] = 0.0;
                lambda[last] = 0.0;
                if !feasible(model, &lambda) {
                    break;
                }
                for b in 1..=steps {
                    lambda[free[1]] = b as f64 * h;
                    lambda[last] = 0.0;
                    if !feasible(model, &lambda) {
                        break;
                    }
                    visit(&mut lambda);
                }
            }
        }
    }
    best.1
}

/// `F(n)` from its definition.
pub fn lyapunov(model: &NetworkModel, n: &[f64]) -> f64 {
    let alpha = model.alpha();
    let mut total = 0.0;
    for i in 0..n.len() {
        let (nu, mu, kappa) = (model.arrival_rates()[i], model.service_rates()[i], model.weights()[i]);
        total += nu * kappa * mu.powf(alpha - 1.0) * (n[i] / nu).powf(alpha + 1.0);
    }
    total / (alpha + 1.0)
}

/// Grid-search minimiser of `F` over `{n ≥ 0 : n_1 + n_3 ≥ w_1, n_2 + n_3 ≥ w_2}`
/// on the linear network with unit service rates. `F` increases in every
/// component, so for each `n_3` on the grid the other two take the least
/// feasible value.
pub fn grid_lift_linear(model: &NetworkModel, w: [f64; 2], h: f64) -> Vec<f64> {
    let top = w[0].max(w[1]);
    let steps = (top / h).ceil() as usize;
    let mut best = (f64::INFINITY, vec![0.0; 3]);
    for k in 0..=steps {
        let n3 = (k as f64 * h).min(top);
        let n = vec![(w[0] - n3).max(0.0), (w[1] - n3).max(0.0), n3];
        let value = lyapunov(model, &n);
        if value < best.0 {
            best = (value, n);
        }
    }
    best.1
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// A unit vector spanning the kernel of the workload map `n ↦ (A n/μ)_{J*}`
/// when that kernel is one-dimensional (`I = |J*| + 1`).
pub fn workload_kernel(model: &NetworkModel) -> Vec<f64> {
    let critical = model.critical_resources();
    let routes = model.route_count();
    assert_eq!(routes, critical.len() + 1, "kernel must be one-dimensional");
    let topo = model.topology();
    // the kernel of an m×(m+1) full-rank matrix: signed maximal minors
    let matrix: Vec<Vec<f64>> = critical
        .iter()
        .map(|&j| {
            (0..routes)
                .map(|i| f64::from(topo.entry(j, i)) / model.service_rates()[i])
                .collect()
        })
        .collect();
    let mut v: Vec<f64> = (0..routes)
        .map(|skip| {
            let minor: Vec<Vec<f64>> = matrix
                .iter()
                .map(|row| (0..routes).filter(|&i| i != skip).map(|i| row[i]).collect())
                .collect();
            let sign = if skip % 2 == 0 { 1.0 } else { -1.0 };
            sign * determinant(minor)
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let size = m.len();
    let mut det = 1.0;
    for c in 0..size {
        let pivot = (c..size).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[pivot][c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            m.swap(pivot, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..size {
            let factor = m[r][c] / m[c][c];
            for k in c..size {
                m[r][k] -= factor * m[c][k];
            }
        }
    }
    det
}

/// Single link of unit capacity carrying one route with unit service rate.
pub fn single_link_queue(arrival_rate: f64, alpha: f64) -> NetworkModel {
    NetworkModel::new(
        Topology::from_routes(vec![1.0], &[vec![0]]).unwrap(),
        TrafficParams {
            arrival_rates: vec![arrival_rate],
            service_rates: vec![1.0],
            weights: vec![1.0],
            alpha,
        },
    )
    .unwrap()
}

/// Time averages of `N_route` over `batches` equal windows of `[0, horizon]`.
pub fn batch_means(path: &alphafair_core::EventPath, route: usize, batches: usize) -> Vec<f64> {
    let width = path.horizon / batches as f64;
    let mut sums = vec![0.0; batches];
    for k in 0..path.len() {
        let start = path.node_time(k);
        let end = if k + 1 < path.len() { path.node_time(k + 1) } else { path.horizon };
        let value = f64::from(path.state(k)[route]);
        // spread the holding interval over the windows it overlaps
        let mut a = start;
        while a < end {
            let b = (((a / width).floor() + 1.0) * width).min(end);
            let batch = ((a / width) as usize).min(batches - 1);
            sums[batch] += value * (b - a);
            a = b;
        }
    }
    sums.iter().map(|s| s / width).collect()
}

/// Mean and standard error of a set of batch means.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// The first `count` points of a Poisson process of rate `rate`, drawn from
/// ChaCha8 stream `id` under `seed`, exactly as the simulator draws them.
pub fn poisson_points(seed: u64, id: u64, rate: f64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    let mut t = 0.0;
    (0..count)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            t += e / rate;
            t
        })
        .collect()
}

/// Checks `N_i(t) = N_i(0) + E_i(t) − S_i(T_i(t))` at every node, with `E`
/// and `S` rebuilt from their random streams.
pub fn check_sample_path_identity(model: &NetworkModel, path: &EventPath) -> Result<(), String> {
    let routes = model.route_count();
    let (total_arrivals, total_departures) = path.event_counts();
    let arrivals: Vec<Vec<f64>> = (0..routes)
        .map(|i| poisson_points(path.seed, 2 * i as u64, model.arrival_rates()[i], total_arrivals[i] as usize + 1))
        .collect();
    let services: Vec<Vec<f64>> = (0..routes)
        .map(|i| poisson_points(path.seed, 2 * i as u64 + 1, model.service_rates()[i], total_departures[i] as usize + 1))
        .collect();
    let mut counted = vec![(0u64, 0u64); routes];
    for k in 0..path.len() {
        if k > 0 {
            match path.events()[k - 1] {
                Event::Arrival(i) => counted[i].0 += 1,
                Event::Departure(i) => counted[i].1 += 1,
            }
        }
        let t = path.node_time(k);
        let clock = path.cumulative_allocation(k);
        for i in 0..routes {
            let (a, d) = counted[i];
            let expected = i64::from(path.initial_state()[i]) + a as i64 - d as i64;
            if i64::from(path.state(k)[i]) != expected {
                return Err(format!("node {k}, route {i}: N = {}, counts give {expected}", path.state(k)[i]));
            }
            let e = arrivals[i].partition_point(|&s| s <= t) as u64;
            let s = services[i].partition_point(|&s| s <= clock[i]) as u64;
            if (e, s) != (a, d) {
                return Err(format!("node {k}, route {i}: E = {e}, S(T) = {s}, events give ({a}, {d})"));
            }
        }
    }
    Ok(())
}
