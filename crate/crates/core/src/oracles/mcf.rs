//! Min-cost flow on the 8-neighbor graph of cell centers, solved by
//! successive shortest augmenting paths with node potentials.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid};

/// Neighbor offsets; direction `d ^ 1` is the opposite of `d`.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcFlow {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McfSolution {
    /// `Σ flow · arc cost`.
    pub cost: f64,
    /// Arcs carrying positive flow.
    pub edge_flows: Vec<ArcFlow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Queued {
    dist: f64,
    node: u32,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Pred {
    from: u32,
    dir: u8,
    /// Cancels flow on the opposite arc instead of adding flow.
    cancel: bool,
}

struct Network {
    nx: usize,
    ny: usize,
    /// Cost per unit mass of the arc leaving node `v` in direction `d`, at
    /// `v * 8 + d`; infinite where the neighbor does not exist.
    cost: Vec<f64>,
    flow: Vec<f64>,
}

impl Network {
    #[inline]
    fn neighbor(&self, v: usize, d: usize) -> Option<usize> {
        let (i, j) = ((v % self.nx) as isize, (v / self.nx) as isize);
        let (di, dj) = DIRS[d];
        let (ni, nj) = (i + di, j + dj);
        let inside = ni >= 0 && nj >= 0 && (ni as usize) < self.nx && (nj as usize) < self.ny;
        inside.then(|| nj as usize * self.nx + ni as usize)
    }
}

/// Exact min-cost flow moving the supplies `f h²` along the 8-neighbor graph
/// of cell centers. Arc costs are `h k̄` for axis arcs and `√2 h k̄` for
/// diagonal arcs, `k̄` the mean of the two end cells.
pub fn mcf_reference(f: &CellField, k: &CellField, grid: &Grid) -> Result<McfSolution> {
    f.check_dims(grid)?;
    k.check_dims(grid)?;
    let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
    let n = nx * ny;
    if n > u32::MAX as usize {
        return Err(Error::Flow("grid too large for the flow reference".into()));
    }
    let mut excess: Vec<f64> = f.values().iter().map(|v| v * grid.cell_area()).collect();
    let positive: f64 = excess.iter().filter(|v| **v > 0.0).sum();
    let total: f64 = excess.iter().sum();
    if !excess.iter().all(|v| v.is_finite()) {
        return Err(Error::Flow("non-finite supply".into()));
    }
    if total.abs() > 1e-10 * positive.max(f64::MIN_POSITIVE) {
        return Err(Error::Flow(format!("unbalanced supplies: net {total:e}")));
    }
    if positive == 0.0 {
        return Ok(McfSolution {
            cost: 0.0,
            edge_flows: Vec::new(),
        });
    }
    let tol = 1e-11 * positive;
    let flow_tol = 1e-14 * positive;

    let mut net = Network {
        nx,
        ny,
        cost: vec![f64::INFINITY; 8 * n],
        flow: vec![0.0; 8 * n],
    };
    let kv = k.values();
    for v in 0..n {
        for d in 0..8 {
            if let Some(w) = net.neighbor(v, d) {
                let len = if d < 4 {
                    h
                } else {
                    std::f64::consts::SQRT_2 * h
                };
                net.cost[8 * v + d] = len * 0.5 * (kv[v] + kv[w]);
            }
        }
    }

    let mut potential = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut pred = vec![
        Pred {
            from: 0,
            dir: 0,
            cancel: false
        };
        n
    ];
    let mut touched: Vec<usize> = Vec::new();
    let mut done: Vec<usize> = Vec::new();
    let mut heap = BinaryHeap::new();

    loop {
        for &v in &touched {
            dist[v] = f64::INFINITY;
            settled[v] = false;
        }
        touched.clear();
        done.clear();
        heap.clear();
        for (v, &e) in excess.iter().enumerate() {
            if e > tol {
                dist[v] = 0.0;
                touched.push(v);
                heap.push(Queued {
                    dist: 0.0,
                    node: v as u32,
                });
            }
        }
        if heap.is_empty() {
            break;
        }
        let mut target = None;
        while let Some(Queued { dist: dv, node }) = heap.pop() {
            let v = node as usize;
            if settled[v] || dv > dist[v] {
                continue;
            }
            settled[v] = true;
            done.push(v);
            if excess[v] < -tol {
                target = Some(v);
                break;
            }
            for d in 0..8 {
                let Some(w) = net.neighbor(v, d) else {
                    continue;
                };
                if settled[w] {
                    continue;
                }
                let c = net.cost[8 * v + d];
                let cancel = net.flow[8 * w + (d ^ 1)] > flow_tol;
                let arc = if cancel { -c } else { c };
                let reduced = (arc + potential[v] - potential[w]).max(0.0);
                let nd = dv + reduced;
                if nd < dist[w] {
                    if dist[w] == f64::INFINITY {
                        touched.push(w);
                    }
                    dist[w] = nd;
                    pred[w] = Pred {
                        from: v as u32,
                        dir: d as u8,
                        cancel,
                    };
                    heap.push(Queued {
                        dist: nd,
                        node: w as u32,
                    });
                }
            }
        }
        let Some(t) = target else {
            if excess.iter().any(|&e| e < -tol) {
                return Err(Error::Flow("infeasible flow problem".into()));
            }
            break;
        };
        let reach = dist[t];
        for &v in &done {
            potential[v] += dist[v] - reach;
        }

        // bottleneck along the path back to its source
        let mut amount = -excess[t];
        let mut v = t;
        while dist[v] != 0.0 || excess[v] <= tol {
            let p = pred[v];
            let from = p.from as usize;
            if p.cancel {
                amount = amount.min(net.flow[8 * v + (p.dir as usize ^ 1)]);
            }
            v = from;
        }
        let source = v;
        amount = amount.min(excess[source]);
        let mut v = t;
        while v != source {
            let p = pred[v];
            let from = p.from as usize;
            if p.cancel {
                let slot = &mut net.flow[8 * v + (p.dir as usize ^ 1)];
                *slot = (*slot - amount).max(0.0);
            } else {
                net.flow[8 * from + p.dir as usize] += amount;
            }
            v = from;
        }
        excess[source] -= amount;
        excess[t] += amount;
    }

    let mut cost = 0.0;
    let mut edge_flows = Vec::new();
    for v in 0..n {
        for d in 0..8 {
            let q = net.flow[8 * v + d];
            if q > 0.0 {
                let w = net.neighbor(v, d).expect("flow on existing arc");
                cost += q * net.cost[8 * v + d];
                edge_flows.push(ArcFlow {
                    from: (v % nx, v / nx),
                    to: (w % nx, w / nx),
                    flow: q,
                });
            }
        }
    }
    Ok(McfSolution { cost, edge_flows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, h: f64) -> Grid {
        Grid::new(n, n, h, (0.0, 0.0)).unwrap()
    }

    fn dipole(g: &Grid, plus: (usize, usize), minus: (usize, usize), m: f64) -> CellField {
        let a = g.cell_area();
        CellField::from_fn(g, |i, j| {
            let mut v = 0.0;
            if (i, j) == plus {
                v += m / a;
            }
            if (i, j) == minus {
                v -= m / a;
            }
            v
        })
    }

    #[test]
    fn same_cell_costs_nothing() {
        let g = grid(6, 0.5);
        let f = dipole(&g, (2, 3), (2, 3), 1.0);
        let sol = mcf_reference(&f, &CellField::constant(&g, 1.0), &g).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert!(sol.edge_flows.is_empty());
    }

    #[test]
    fn axis_and_diagonal_distances_are_exact() {
        let g = grid(10, 0.25);
        let k = CellField::constant(&g, 1.0);
        let axis = mcf_reference(&dipole(&g, (1, 4), (8, 4), 1.0), &k, &g).unwrap();
        assert_relative_eq!(axis.cost, 7.0 * 0.25, max_relative = 1e-12);
        let diag = mcf_reference(&dipole(&g, (1, 1), (7, 7), 1.0), &k, &g).unwrap();
        assert_relative_eq!(diag.cost, 6.0 * 0.25 * 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn chord_metric_bounds_two_atom_cost() {
        let g = grid(24, 1.0 / 24.0);
        let k = CellField::constant(&g, 1.0);
        for (p, m) in [
            ((2, 3), (20, 11)),
            ((5, 5), (6, 20)),
            ((0, 23), (23, 0)),
            ((4, 10), (17, 13)),
        ] {
            let sol = mcf_reference(&dipole(&g, p, m, 2.0), &k, &g).unwrap();
            let (a, b) = (g.cell_center(p.0, p.1), g.cell_center(m.0, m.1));
            let euclid = 2.0 * ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            assert!(
                sol.cost >= euclid * (1.0 - 1e-12),
                "{} < {euclid}",
                sol.cost
            );
            assert!(
                sol.cost <= 1.0824 * euclid,
                "{} > 1.0824 * {euclid}",
                sol.cost
            );
        }
    }

    #[test]
    fn flows_conserve_mass() {
        let g = Grid::new(12, 8, 0.1, (0.0, 0.0)).unwrap();
        let f = CellField::from_fn(&g, |i, j| match (i, j) {
            (1..=3, 2..=5) => 1.0,
            (8..=10, 1..=2) => -2.0,
            _ => 0.0,
        });
        let k = CellField::from_fn(&g, |i, _| if i == 6 { 4.0 } else { 1.0 });
        let sol = mcf_reference(&f, &k, &g).unwrap();
        let mut net = vec![0.0; g.cell_count()];
        for arc in &sol.edge_flows {
            net[g.idx(arc.from.0, arc.from.1)] += arc.flow;
            net[g.idx(arc.to.0, arc.to.1)] -= arc.flow;
        }
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let supply = f.get(i, j) * g.cell_area();
                assert!((net[g.idx(i, j)] - supply).abs() < 1e-12, "({i}, {j})");
            }
        }
        assert!(sol.cost > 0.0);
    }

    #[test]
    fn obstacle_forces_detour() {
        let g = grid(9, 1.0);
        let f = dipole(&g, (1, 4), (7, 4), 1.0);
        let free = mcf_reference(&f, &CellField::constant(&g, 1.0), &g).unwrap();
        let wall = CellField::from_fn(&g, |i, j| if i == 4 && j >= 1 { 1e6 } else { 1.0 });
        let blocked = mcf_reference(&f, &wall, &g).unwrap();
        assert_relative_eq!(free.cost, 6.0, max_relative = 1e-12);
        assert!(blocked.cost > free.cost + 1.0 && blocked.cost < 1e3);
    }

    #[test]
    fn rejects_unbalanced_supplies() {
        let g = grid(5, 1.0);
        let f = CellField::from_fn(&g, |i, j| if (i, j) == (0, 0) { 1.0 } else { 0.0 });
        assert!(matches!(
            mcf_reference(&f, &CellField::constant(&g, 1.0), &g),
            Err(Error::Flow(_))
        ));
    }
}
