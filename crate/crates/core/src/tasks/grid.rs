//! Shortest paths on grids with hidden cell costs.
//!
//! Each cell has one of `K` cost levels, seen only through noisy features.
//! Paths run from the top-left to the bottom-right corner with 8-neighbour
//! moves, and a path costs the sum of the costs of the cells it visits,
//! both endpoints included. Supervision is the true shortest path; cost
//! grids consistent with it are sampled by a Gibbs chain.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::TaskError;
use crate::explain::{ExplainError, ExplanationSet};
use crate::formula::World;
use crate::learn::{Input, PerceptionModel, Supervision};
use crate::rng;

/// Relative tolerance for comparing path costs.
pub const COST_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// Cost of each level, cheapest first.
    pub level_costs: Vec<f64>,
    /// Standard deviation of the feature noise.
    pub noise: f64,
    /// Channels per level in the rendered feature vector.
    pub patch: usize,
    /// Probability that a cell gets the cheapest level; the remaining
    /// levels share the rest evenly.
    pub cheap_prob: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 6,
            cols: 6,
            level_costs: vec![1.0, 9.0],
            noise: 0.5,
            patch: 4,
            cheap_prob: 0.5,
        }
    }
}

impl GridConfig {
    pub fn num_levels(&self) -> usize {
        self.level_costs.len()
    }

    /// Length of each cell's feature vector.
    pub fn feature_dim(&self) -> usize {
        self.num_levels() * self.patch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridInstance {
    pub rows: usize,
    pub cols: usize,
    /// Level index of each cell, row-major.
    pub levels: Vec<usize>,
    pub level_costs: Vec<f64>,
    /// One feature vector per cell: the one-hot level, each entry repeated
    /// `patch` times, plus Gaussian noise.
    pub features: Vec<Vec<f64>>,
    pub true_path: Vec<usize>,
}

impl GridInstance {
    pub fn costs(&self) -> Vec<f64> {
        levels_to_costs(&self.levels, &self.level_costs)
    }

    pub fn input(&self) -> Input {
        Input::new(self.features.clone())
    }

    pub fn supervision(&self, burn_in: usize) -> GridSupervision {
        GridSupervision {
            rows: self.rows,
            cols: self.cols,
            level_costs: self.level_costs.clone(),
            true_path: self.true_path.clone(),
            burn_in,
        }
    }
}

pub fn levels_to_costs(levels: &[usize], level_costs: &[f64]) -> Vec<f64> {
    levels.iter().map(|&l| level_costs[l]).collect()
}

fn validate(config: &GridConfig) -> Result<(), TaskError> {
    if config.rows == 0 || config.cols == 0 {
        return Err(TaskError::InvalidParameter("grid must be non-empty".into()));
    }
    if config.level_costs.len() < 2 {
        return Err(TaskError::InvalidParameter("need at least two cost levels".into()));
    }
    if config.level_costs.windows(2).any(|w| !(w[0] < w[1])) || config.level_costs[0] <= 0.0 {
        return Err(TaskError::InvalidParameter(
            "level costs must be positive and increasing".into(),
        ));
    }
    if config.patch == 0 {
        return Err(TaskError::InvalidParameter("patch must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.cheap_prob) || !(config.noise >= 0.0) {
        return Err(TaskError::InvalidParameter("bad noise or level probability".into()));
    }
    Ok(())
}

/// A random instance: levels, features and the shortest path.
pub fn generate_grid(config: &GridConfig, seed: u64) -> Result<GridInstance, TaskError> {
    validate(config)?;
    let mut r = rng::seeded(seed);
    let k = config.num_levels();
    let cells = config.rows * config.cols;
    let levels: Vec<usize> = (0..cells)
        .map(|_| {
            if r.random::<f64>() < config.cheap_prob {
                0
            } else {
                1 + r.random_range(0..k - 1)
            }
        })
        .collect();
    let noise = Normal::new(0.0, config.noise).expect("non-negative std");
    let features = levels
        .iter()
        .map(|&l| {
            (0..config.feature_dim())
                .map(|j| f64::from(u8::from(j / config.patch == l)) + noise.sample(&mut r))
                .collect()
        })
        .collect();
    let costs = levels_to_costs(&levels, &config.level_costs);
    let (true_path, _) = dijkstra(config.rows, config.cols, &costs);
    Ok(GridInstance {
        rows: config.rows,
        cols: config.cols,
        levels,
        level_costs: config.level_costs.clone(),
        features,
        true_path,
    })
}

fn neighbours(rows: usize, cols: usize, v: usize) -> impl Iterator<Item = usize> {
    let (r, c) = ((v / cols) as isize, (v % cols) as isize);
    (-1isize..=1)
        .flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| dr != 0 || dc != 0)
        .filter_map(move |(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
                .then(|| nr as usize * cols + nc as usize)
        })
}

/// Distance from the top-left corner to every cell, counting both
/// endpoints' costs.
fn distances(rows: usize, cols: usize, costs: &[f64]) -> Vec<f64> {
    let n = rows * cols;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[0] = costs[0];
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !done[v] && (u == usize::MAX || dist[v] < dist[u]) {
                u = v;
            }
        }
        if u == usize::MAX || dist[u] == f64::INFINITY {
            break;
        }
        done[u] = true;
        for v in neighbours(rows, cols, u) {
            let d = dist[u] + costs[v];
            if d < dist[v] {
                dist[v] = d;
            }
        }
    }
    dist
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Cost of the cheapest corner-to-corner path.
pub fn shortest_cost(rows: usize, cols: usize, costs: &[f64]) -> f64 {
    distances(rows, cols, costs)[rows * cols - 1]
}

/// A cheapest corner-to-corner path and its cost. Among equally cheap
/// predecessors the path is traced back through the lowest cell index.
pub fn dijkstra(rows: usize, cols: usize, costs: &[f64]) -> (Vec<usize>, f64) {
    let dist = distances(rows, cols, costs);
    let target = rows * cols - 1;
    let mut path = vec![target];
    let mut v = target;
    while v != 0 {
        let u = neighbours(rows, cols, v)
            .filter(|&u| close(dist[u] + costs[v], dist[v]))
            .min()
            .expect("a predecessor on a shortest path");
        path.push(u);
        v = u;
    }
    path.reverse();
    (path, dist[target])
}

pub fn path_cost(path: &[usize], costs: &[f64]) -> f64 {
    path.iter().map(|&v| costs[v]).sum()
}

/// 1 when both paths visit the same set of cells.
pub fn path_accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let mut a = predicted.to_vec();
    let mut b = truth.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    f64::from(u8::from(a == b))
}

/// Whether `path` is a cheapest path under `costs`.
pub fn is_shortest(rows: usize, cols: usize, path: &[usize], costs: &[f64]) -> bool {
    let (c, best) = (path_cost(path, costs), shortest_cost(rows, cols, costs));
    c < best || close(c, best)
}

/// Cost-level grids that keep `true_path` a shortest path.
///
/// Starts with every path cell at the cheapest level and every other cell
/// at the most expensive one. Each step moves a uniformly chosen cell to a
/// uniformly chosen different level and keeps the move only if the path
/// stays shortest. After `burn_in` steps, the state after each of the next
/// `samples` steps is emitted.
pub fn gibbs_explanations(
    rows: usize,
    cols: usize,
    level_costs: &[f64],
    true_path: &[usize],
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let k = level_costs.len();
    let cells = rows * cols;
    let mut levels = vec![k - 1; cells];
    for &v in true_path {
        levels[v] = 0;
    }
    let mut costs = levels_to_costs(&levels, level_costs);
    let mut r = rng::stream(seed, 0, 4);
    let mut out = Vec::with_capacity(samples);
    for step in 0..burn_in + samples {
        let cell = r.random_range(0..cells);
        let mut level = r.random_range(0..k - 1);
        if level >= levels[cell] {
            level += 1;
        }
        let old = costs[cell];
        costs[cell] = level_costs[level];
        if is_shortest(rows, cols, true_path, &costs) {
            levels[cell] = level;
        } else {
            costs[cell] = old;
        }
        if step >= burn_in {
            out.push(levels.clone());
        }
    }
    out
}

/// One-hot encoding of a level grid: cell `c` at level `l` is variable
/// `c·K + l + 1`.
pub fn levels_to_world(levels: &[usize], num_levels: usize) -> World {
    let mut bits = vec![false; levels.len() * num_levels];
    for (c, &l) in levels.iter().enumerate() {
        bits[c * num_levels + l] = true;
    }
    World(bits)
}

/// Samples explanations of a shortest-path label with the Gibbs chain.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSupervision {
    pub rows: usize,
    pub cols: usize,
    pub level_costs: Vec<f64>,
    pub true_path: Vec<usize>,
    pub burn_in: usize,
}

impl Supervision for GridSupervision {
    fn explanations(&self, draws: usize, _theta: f64, seed: u64) -> Result<ExplanationSet, ExplainError> {
        let mut set = ExplanationSet::new();
        let k = self.level_costs.len();
        for g in gibbs_explanations(self.rows, self.cols, &self.level_costs, &self.true_path, self.burn_in, draws, seed) {
            set.record_draw(levels_to_world(&g, k));
        }
        Ok(set)
    }
}

/// Most likely level of every cell under a categorical model.
pub fn predict_levels<M: PerceptionModel + ?Sized>(model: &M, instance: &GridInstance) -> Vec<usize> {
    instance.features.iter().map(|x| model.predict(x)[0]).collect()
}

/// Shortest path under the predicted levels.
pub fn predict_path<M: PerceptionModel + ?Sized>(model: &M, instance: &GridInstance) -> Vec<usize> {
    let costs = levels_to_costs(&predict_levels(model, instance), &instance.level_costs);
    dijkstra(instance.rows, instance.cols, &costs).0
}

/// Fraction of instances whose predicted path equals the true one.
pub fn exact_path_accuracy<M: PerceptionModel + ?Sized>(model: &M, instances: &[GridInstance]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    instances
        .iter()
        .map(|g| path_accuracy(&predict_path(model, g), &g.true_path))
        .sum::<f64>()
        / instances.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_goes_diagonal() {
        let costs = vec![2.0; 16];
        let (path, cost) = dijkstra(4, 4, &costs);
        assert_eq!(path, vec![0, 5, 10, 15]);
        assert_eq!(cost, 8.0);
    }

    #[test]
    fn single_row() {
        let (path, cost) = dijkstra(1, 4, &[1.0, 3.0, 2.0, 1.0]);
        assert_eq!(path, vec![0, 1, 2, 3]);
        assert_eq!(cost, 7.0);
    }

    #[test]
    fn accuracy_compares_cell_sets() {
        assert_eq!(path_accuracy(&[0, 4, 8], &[0, 4, 8]), 1.0);
        assert_eq!(path_accuracy(&[0, 1, 5, 8], &[0, 4, 8]), 0.0);
    }

    #[test]
    fn gibbs_keeps_constraint() {
        let g = generate_grid(&GridConfig::default(), 3).unwrap();
        let start_ok = {
            let mut levels = vec![1; 36];
            for &v in &g.true_path {
                levels[v] = 0;
            }
            is_shortest(6, 6, &g.true_path, &levels_to_costs(&levels, &g.level_costs))
        };
        assert!(start_ok);
        for grid in gibbs_explanations(6, 6, &g.level_costs, &g.true_path, 100, 300, 1) {
            assert!(is_shortest(6, 6, &g.true_path, &levels_to_costs(&grid, &g.level_costs)));
        }
    }
}
