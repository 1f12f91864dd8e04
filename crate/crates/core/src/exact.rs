//! Exact transportation LP.
//!
//! [`exact_ot`] is a primal transportation simplex over spanning-tree bases
//! of the bipartite graph on `m + n` nodes. The initial basis comes from the
//! north-west-corner rule, entering cells are priced by block search (most
//! negative reduced cost within a block of about `√(mn)` cells), and the
//! leaving cell is chosen so the basis stays strongly feasible with respect
//! to the root `row 0`. Strong feasibility rules out cycling on degenerate
//! pivots without perturbing the marginals.
//!
//! [`brute_force_ot`] enumerates every basis of tiny problems and is used as
//! an independent oracle. [`check_optimality`] verifies a complementary
//! slackness certificate for any plan.

use ndarray::Array2;

use crate::error::{OtError, Result};
use crate::functional::marginal_violation;
use crate::kernel::Reduced;
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::Histogram;
use crate::sinkhorn::finish;
use crate::trace::{SolveTrace, SolverReport, Stopwatch, Termination, TraceRecord};

/// Spanning-tree basis with its dual potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisState {
    /// `m + n − 1` cells `(i, j)` forming a spanning tree on rows and columns.
    pub cells: Vec<(usize, usize)>,
    /// Row potentials.
    pub u: Vec<f64>,
    /// Column potentials.
    pub v: Vec<f64>,
}

impl BasisState {
    /// `C_ij − u_i − v_j`.
    pub fn reduced_cost(&self, cost: &CostMatrix, i: usize, j: usize) -> f64 {
        cost.view()[[i, j]] - self.u[i] - self.v[j]
    }

    /// Smallest reduced cost over all cells.
    pub fn min_reduced_cost(&self, cost: &CostMatrix) -> f64 {
        let (m, n) = cost.shape();
        (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.reduced_cost(cost, i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when the cells form a spanning tree on the `m + n` nodes.
    pub fn is_spanning_tree(&self, m: usize, n: usize) -> bool {
        if self.cells.len() + 1 != m + n {
            return false;
        }
        let mut dsu = DisjointSets::new(m + n);
        self.cells.iter().all(|&(i, j)| dsu.union(i, m + j))
    }
}

/// Optimal vertex plan together with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub report: SolverReport,
    pub basis: BasisState,
}

/// Exact optimal transport; see the module documentation.
pub fn exact_ot(mu: &Histogram, nu: &Histogram, cost: &CostMatrix) -> Result<SolverReport> {
    exact_ot_with_basis(mu, nu, cost).map(|s| s.report)
}

/// [`exact_ot`], also returning the optimal basis and potentials.
pub fn exact_ot_with_basis(
    mu: &Histogram,
    nu: &Histogram,
    cost: &CostMatrix,
) -> Result<ExactSolution> {
    let red = Reduced::new(mu, nu, cost)?;
    let mut clock = Stopwatch::start();
    let mut simplex = Simplex::new(&red.cost, &red.mu, &red.nu);
    let mut trace = SolveTrace::new();
    let pivots = simplex.run(&mut trace, &mut clock)?;

    let small = simplex.plan();
    let (u_red, v_red) = simplex.potentials();
    let basis = expand_basis(&red, cost, &simplex.cells, &u_red, &v_red);
    let report = finish(
        &red,
        small,
        mu,
        nu,
        cost,
        trace,
        Termination::ToleranceMet,
        pivots,
        &mut clock,
        None,
    )?;
    Ok(ExactSolution { report, basis })
}

const NONE: usize = usize::MAX;

struct Simplex<'a> {
    cost: &'a Array2<f64>,
    mu: &'a [f64],
    nu: &'a [f64],
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    order: Vec<usize>,
    next_block: usize,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a Array2<f64>, mu: &'a [f64], nu: &'a [f64]) -> Self {
        let (m, n) = cost.dim();
        let mut s = Self {
            cost,
            mu,
            nu,
            m,
            n,
            cells: Vec::with_capacity(m + n - 1),
            flow: Vec::with_capacity(m + n - 1),
            adj: vec![Vec::new(); m + n],
            parent: vec![NONE; m + n],
            parent_cell: vec![NONE; m + n],
            depth: vec![0; m + n],
            pot: vec![0.0; m + n],
            order: Vec::with_capacity(m + n),
            next_block: 0,
        };
        s.north_west_corner();
        for (k, &(i, j)) in s.cells.iter().enumerate() {
            s.adj[i].push(k);
            s.adj[m + j].push(k);
        }
        s.rebuild_tree();
        s
    }

    /// Staircase basis. On a tie the zero cell is placed to the right, which
    /// makes the tree strongly feasible for root `row 0` when every bin has
    /// positive mass.
    fn north_west_corner(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut supply = self.mu.to_vec();
        let mut demand = self.nu.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            if i == m - 1 {
                for jj in j..n {
                    self.cells.push((i, jj));
                    self.flow.push(demand[jj].max(0.0));
                }
                break;
            }
            if j == n - 1 {
                for ii in i..m {
                    self.cells.push((ii, j));
                    self.flow.push(supply[ii].max(0.0));
                }
                break;
            }
            let x = supply[i].min(demand[j]);
            self.cells.push((i, j));
            self.flow.push(x);
            if supply[i] < demand[j] {
                demand[j] -= x;
                i += 1;
            } else {
                supply[i] -= x;
                j += 1;
            }
        }
    }

    fn cell_other(&self, k: usize, node: usize) -> usize {
        let (i, j) = self.cells[k];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// Recomputes parents, depths, potentials and the preorder from row 0.
    fn rebuild_tree(&mut self) {
        let m = self.m;
        self.order.clear();
        self.parent[0] = NONE;
        self.parent_cell[0] = NONE;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(x) = stack.pop() {
            self.order.push(x);
            for idx in 0..self.adj[x].len() {
                let k = self.adj[x][idx];
                if k == self.parent_cell[x] {
                    continue;
                }
                let y = self.cell_other(k, x);
                let (i, j) = self.cells[k];
                let c = self.cost[[i, j]];
                self.parent[y] = x;
                self.parent_cell[y] = k;
                self.depth[y] = self.depth[x] + 1;
                // u_i + v_j = C_ij on every basic cell
                self.pot[y] = c - self.pot[x];
                stack.push(y);
            }
        }
        debug_assert_eq!(self.order.len(), m + self.n, "basis must span all nodes");
    }

    fn reduced_cost(&self, i: usize, j: usize) -> f64 {
        self.cost[[i, j]] - self.pot[i] - self.pot[self.m + j]
    }

    /// Block-search pricing.
    fn entering(&mut self, threshold: f64) -> Option<(usize, usize, f64)> {
        let total = self.m * self.n;
        let block = ((total as f64).sqrt().ceil() as usize).clamp(10.min(total), total);
        let mut best: Option<(usize, f64)> = None;
        let mut count = 0;
        for step in 0..total {
            let idx = (self.next_block + step) % total;
            let (i, j) = (idx / self.n, idx % self.n);
            let rc = self.reduced_cost(i, j);
            if rc < best.map_or(-threshold, |b| b.1) {
                best = Some((idx, rc));
            }
            count += 1;
            if count == block {
                if let Some((b, rc)) = best {
                    self.next_block = (idx + 1) % total;
                    return Some((b / self.n, b % self.n, rc));
                }
                count = 0;
            }
        }
        best.map(|(b, rc)| (b / self.n, b % self.n, rc))
    }

    /// One pivot on entering cell `(p, q)`. Returns the step length.
    fn pivot(&mut self, p: usize, q: usize) -> f64 {
        let m = self.m;
        let first = p;
        let second = m + q;

        let (mut a, mut b) = (first, second);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        // Cycle orientation: join → … → first → second → … → join. Among
        // blocking cells keep the last one met along this orientation.
        let mut delta = f64::INFINITY;
        let mut leaving = NONE;
        let mut x = first;
        while x != join {
            // cell (row x, parent column) is traversed against its direction
            if x < m {
                let d = self.flow[self.parent_cell[x]];
                if d < delta {
                    delta = d;
                    leaving = x;
                }
            }
            x = self.parent[x];
        }
        let mut x = second;
        while x != join {
            if x >= m {
                let d = self.flow[self.parent_cell[x]];
                if d <= delta {
                    delta = d;
                    leaving = x;
                }
            }
            x = self.parent[x];
        }
        debug_assert!(leaving != NONE, "transportation cycles always contain a blocking cell");

        if delta > 0.0 {
            let mut x = first;
            while x != join {
                let k = self.parent_cell[x];
                self.flow[k] += if x < m { -delta } else { delta };
                x = self.parent[x];
            }
            let mut x = second;
            while x != join {
                let k = self.parent_cell[x];
                self.flow[k] += if x >= m { -delta } else { delta };
                x = self.parent[x];
            }
        }

        let out = self.parent_cell[leaving];
        let (oi, oj) = self.cells[out];
        self.adj[oi].retain(|&k| k != out);
        self.adj[m + oj].retain(|&k| k != out);
        self.cells[out] = (p, q);
        self.flow[out] = delta;
        self.adj[p].push(out);
        self.adj[m + q].push(out);
        self.rebuild_tree();
        delta
    }

    fn run(&mut self, trace: &mut SolveTrace, clock: &mut Stopwatch) -> Result<usize> {
        let max_cost = self.cost.iter().copied().fold(0.0, f64::max);
        let threshold = 1e-12 * max_cost;
        let limit = 50 * self.m * self.n + 10_000;
        let record_every = (self.m + self.n).max(1);
        let mut current = self.basic_cost();
        let mut pivots = 0;
        while let Some((p, q, rc)) = self.entering(threshold) {
            if pivots == limit {
                return Err(OtError::CycleLimit { limit });
            }
            let delta = self.pivot(p, q);
            current += delta * rc;
            pivots += 1;
            if pivots % record_every == 0 {
                trace.push(TraceRecord {
                    iter: pivots,
                    cost: current,
                    marginal_violation: 0.0,
                    wall_time_s: clock.seconds(),
                    effective_eps: None,
                });
            }
        }
        Ok(pivots)
    }

    fn basic_cost(&self) -> f64 {
        self.cells
            .iter()
            .zip(&self.flow)
            .map(|(&(i, j), f)| self.cost[[i, j]] * f)
            .sum()
    }

    /// Basic flows recomputed from the marginals by peeling the tree from the
    /// leaves, which discards rounding accumulated over the pivots.
    fn plan(&self) -> Array2<f64> {
        let m = self.m;
        let mut residual: Vec<f64> = self.mu.iter().chain(self.nu).copied().collect();
        let mut plan = Array2::zeros((m, self.n));
        for &x in self.order.iter().rev() {
            let k = self.parent_cell[x];
            if k == NONE {
                continue;
            }
            let f = residual[x];
            residual[self.parent[x]] -= f;
            let (i, j) = self.cells[k];
            plan[[i, j]] = f.max(0.0);
        }
        plan
    }

    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        (self.pot[..self.m].to_vec(), self.pot[self.m..].to_vec())
    }
}

/// Lifts a reduced basis to the full problem. Zero-mass bins are attached as
/// leaves through their cheapest cell, with potentials that keep every
/// reduced cost nonnegative.
fn expand_basis(
    red: &Reduced,
    cost: &CostMatrix,
    cells: &[(usize, usize)],
    u_red: &[f64],
    v_red: &[f64],
) -> BasisState {
    let (m, n) = cost.shape();
    let c = cost.view();
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    for (k, &i) in red.rows.iter().enumerate() {
        u[i] = u_red[k];
    }
    for (k, &j) in red.cols.iter().enumerate() {
        v[j] = v_red[k];
    }
    let mut basis: Vec<(usize, usize)> = cells
        .iter()
        .map(|&(i, j)| (red.rows[i], red.cols[j]))
        .collect();
    for j in 0..n {
        if v[j].is_nan() {
            let (i, val) = red
                .rows
                .iter()
                .map(|&i| (i, c[[i, j]] - u[i]))
                .fold((NONE, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            v[j] = val;
            basis.push((i, j));
        }
    }
    for i in 0..m {
        if u[i].is_nan() {
            let (j, val) = (0..n)
                .map(|j| (j, c[[i, j]] - v[j]))
                .fold((NONE, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            u[i] = val;
            basis.push((i, j));
        }
    }
    BasisState {
        cells: basis,
        u,
        v,
    }
}

/// Largest problem (in cells) accepted by [`brute_force_ot`].
pub const BRUTE_FORCE_MAX_CELLS: usize = 16;

/// Minimum of `⟨C, Γ⟩` over every basic feasible solution, found by
/// enumerating all `(m + n − 1)`-subsets of cells that form a spanning tree.
pub fn brute_force_ot(mu: &Histogram, nu: &Histogram, cost: &CostMatrix) -> Result<f64> {
    let (m, n) = (mu.len(), nu.len());
    if cost.shape() != (m, n) {
        return Err(OtError::ShapeMismatch {
            expected: (m, n),
            got: cost.shape(),
        });
    }
    let cells = m * n;
    if cells > BRUTE_FORCE_MAX_CELLS {
        return Err(OtError::TooLarge {
            cells,
            max: BRUTE_FORCE_MAX_CELLS,
        });
    }
    let size = m + n - 1;
    let c = cost.view();
    let supply: Vec<f64> = mu.as_slice().iter().chain(nu.as_slice()).copied().collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << cells) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..cells)
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| (k / n, k % n))
            .collect();
        let mut dsu = DisjointSets::new(m + n);
        if !chosen.iter().all(|&(i, j)| dsu.union(i, m + j)) {
            continue;
        }
        if let Some(flows) = peel_tree(&chosen, &supply, m) {
            let total: f64 = chosen.iter().zip(&flows).map(|(&(i, j), f)| c[[i, j]] * f).sum();
            best = best.min(total);
        }
    }
    Ok(best)
}

/// Basic solution of a spanning tree by repeatedly settling leaf nodes.
/// `None` if some flow is negative.
fn peel_tree(cells: &[(usize, usize)], supply: &[f64], m: usize) -> Option<Vec<f64>> {
    let nodes = supply.len();
    let mut residual = supply.to_vec();
    let mut degree = vec![0usize; nodes];
    for &(i, j) in cells {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut flows = vec![f64::NAN; cells.len()];
    let mut settled = vec![false; cells.len()];
    for _ in 0..cells.len() {
        let (k, leaf) = cells.iter().enumerate().find_map(|(k, &(i, j))| {
            if settled[k] {
                None
            } else if degree[i] == 1 {
                Some((k, i))
            } else if degree[m + j] == 1 {
                Some((k, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = cells[k];
        let other = if leaf == i { m + j } else { i };
        let f = residual[leaf];
        if f < -1e-12 {
            return None;
        }
        flows[k] = f.max(0.0);
        residual[leaf] = 0.0;
        residual[other] -= f;
        degree[i] -= 1;
        degree[m + j] -= 1;
        settled[k] = true;
    }
    Some(flows)
}

/// Complementary-slackness certificate.
///
/// Potentials are fitted on the support `{Γ_ij > tol}` (a spanning forest
/// fixes them up to one shift per connected component); the plan is accepted
/// if the support equations hold within `tol` and some choice of component
/// shifts satisfies `u_i + v_j ≤ C_ij + tol` everywhere. The shift problem is
/// a system of difference constraints, solved by Bellman–Ford.
pub fn check_optimality(
    plan: &TransportPlan,
    cost: &CostMatrix,
    mu: &Histogram,
    nu: &Histogram,
    tol: f64,
) -> Result<bool> {
    let violation = marginal_violation(plan, mu, nu)?;
    if cost.shape() != plan.shape() {
        return Err(OtError::ShapeMismatch {
            expected: plan.shape(),
            got: cost.shape(),
        });
    }
    if violation > tol {
        return Err(OtError::InfeasiblePlan { violation, tol });
    }
    let (m, n) = plan.shape();
    let p = plan.view();
    let c = cost.view();

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
    for i in 0..m {
        for j in 0..n {
            if p[[i, j]] > tol {
                adj[i].push(m + j);
                adj[m + j].push(i);
            }
        }
    }
    let edge_cost = |x: usize, y: usize| {
        if x < m {
            c[[x, y - m]]
        } else {
            c[[y, x - m]]
        }
    };

    let mut comp = vec![NONE; m + n];
    let mut pot = vec![0.0; m + n];
    let mut components = 0;
    for root in 0..m + n {
        if comp[root] != NONE {
            continue;
        }
        comp[root] = components;
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if comp[y] == NONE {
                    comp[y] = components;
                    pot[y] = edge_cost(x, y) - pot[x];
                    stack.push(y);
                } else if (pot[x] + pot[y] - edge_cost(x, y)).abs() > tol {
                    return Ok(false);
                }
            }
        }
        components += 1;
    }

    // Shifts α: rows of component a get +α_a, columns get −α_a, so
    // u_i + v_j ≤ C_ij + tol becomes α_a − α_b ≤ slack(i, j).
    let mut slack = vec![f64::INFINITY; components * components];
    for i in 0..m {
        for j in 0..n {
            let s = c[[i, j]] + tol - pot[i] - pot[m + j];
            let (a, b) = (comp[i], comp[m + j]);
            if a == b && s < 0.0 {
                return Ok(false);
            }
            let e = &mut slack[a * components + b];
            *e = e.min(s);
        }
    }
    // α_a ≤ α_b + slack(a, b): edge b → a.
    let mut dist = vec![0.0; components];
    for _ in 0..components {
        let mut changed = false;
        for a in 0..components {
            for b in 0..components {
                let w = slack[a * components + b];
                if a != b && w.is_finite() && dist[b] + w < dist[a] - 1e-15 {
                    dist[a] = dist[b] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(true);
        }
    }
    Ok(false)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}
