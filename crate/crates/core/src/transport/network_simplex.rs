//! Primal network simplex for the balanced transportation problem.
//!
//! Supply nodes `0..n`, demand nodes `n..n+m`, an artificial root joined to
//! every node, a strongly feasible spanning tree stored as parent/thread
//! lists, and block-search pricing.

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_DOWN: i8 = -1;
const DIR_UP: i8 = 1;

/// Optimal flow on the `n x m` complete bipartite graph.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Row-major `n x m` flows.
    pub flow: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    node_num: usize,
    arc_num: usize,
    root: usize,
    art_cost: f64,
    eps: f64,

    source: Vec<u32>,
    target: Vec<u32>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,

    parent: Vec<isize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn new(a: &[f64], b: &[f64], cost: &'a [f64]) -> Self {
        let (n, m) = (a.len(), b.len());
        let node_num = n + m;
        let arc_num = n * m;
        let all = arc_num + node_num;
        let max_cost = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let art_cost = (max_cost + 1.0) * node_num as f64;

        let mut source = vec![0u32; all];
        let mut target = vec![0u32; all];
        for i in 0..n {
            for j in 0..m {
                source[i * m + j] = i as u32;
                target[i * m + j] = (n + j) as u32;
            }
        }
        let root = node_num;
        let mut s = Simplex {
            n,
            m,
            cost,
            node_num,
            arc_num,
            root,
            art_cost,
            eps: 8.0 * f64::EPSILON * art_cost,
            source,
            target,
            flow: vec![0.0; all],
            state: vec![STATE_LOWER; all],
            pi: vec![0.0; node_num + 1],
            parent: vec![0; node_num + 1],
            pred: vec![0; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        s.parent[root] = -1;
        s.pred[root] = usize::MAX;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        s.pi[root] = 0.0;

        for u in 0..node_num {
            let e = arc_num + u;
            let supply = if u < n { a[u] } else { -b[u - n] };
            s.parent[u] = root as isize;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if supply >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.source[e] = u as u32;
                s.target[e] = root as u32;
                s.flow[e] = supply;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.source[e] = root as u32;
                s.target[e] = u as u32;
                s.flow[e] = -supply;
            }
        }
        s
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[e]
        } else if self.source[e] as usize == self.root {
            self.art_cost
        } else {
            0.0
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        f64::from(self.state[e])
            * (self.cost[e] + self.pi[self.source[e] as usize] - self.pi[self.target[e] as usize])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut found = None;
        let mut cnt = self.block_size;
        let range = (self.next_arc..self.arc_num).chain(0..self.next_arc);
        for e in range {
            let c = self.reduced(e);
            if c < min {
                min = c;
                found = Some(e);
            }
            cnt -= 1;
            if cnt == 0 {
                if found.is_some() {
                    break;
                }
                cnt = self.block_size;
            }
        }
        match found {
            Some(e) => {
                self.in_arc = e;
                self.next_arc = e;
                true
            }
            None => false,
        }
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc] as usize;
        let mut v = self.target[self.in_arc] as usize;
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u] as usize;
            } else {
                v = self.parent[v] as usize;
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source[self.in_arc] as usize, self.target[self.in_arc] as usize)
        } else {
            (self.target[self.in_arc] as usize, self.source[self.in_arc] as usize)
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN { f64::INFINITY } else { self.flow[e] };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u] as usize;
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP { f64::INFINITY } else { self.flow[e] };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u] as usize;
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = f64::from(self.state[self.in_arc]) * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc] as usize;
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u] as usize;
            }
            let mut u = self.target[self.in_arc] as usize;
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u] as usize;
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = if self.flow[out] == 0.0 { STATE_LOWER } else { STATE_UPPER };
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out] as usize;

        if u_in == u_out {
            self.parent[u_in] = v_in as isize;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem] as usize;
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem as isize;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem as isize;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u] as usize;
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source[self.in_arc] as usize { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out: isize = if self.last_succ[join] == v_in { join as isize } else { -1 };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in as isize;
        while u != -1 && self.last_succ[u as usize] == v_in {
            self.last_succ[u as usize] = last_succ_out;
            u = self.parent[u as usize];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out as isize;
            while u != up_limit_out && self.last_succ[u as usize] == old_last_succ {
                self.last_succ[u as usize] = old_rev_thread;
                u = self.parent[u as usize];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out as isize;
            while u != up_limit_out && self.last_succ[u as usize] == old_last_succ {
                self.last_succ[u as usize] = last_succ_out;
                u = self.parent[u as usize];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u] as usize;
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u] as usize;
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - f64::from(self.pred_dir[self.u_in]) * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_iter: usize) -> Option<usize> {
        let mut it = 0;
        while self.find_entering_arc() {
            if it >= max_iter {
                return None;
            }
            self.find_join_node();
            if !self.find_leaving_arc() || !self.delta.is_finite() {
                return None;
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            it += 1;
        }
        Some(it)
    }
}

/// Solves `min <C, P>` over couplings of `a` (length n) and `b` (length m),
/// with `cost` row-major `n x m`. Supplies must be nonnegative with equal
/// totals up to round-off. Returns `None` if the iteration cap is reached.
pub fn solve(a: &[f64], b: &[f64], cost: &[f64], max_iter: usize) -> Option<Solution> {
    let (n, m) = (a.len(), b.len());
    debug_assert_eq!(cost.len(), n * m);
    let mut s = Simplex::new(a, b, cost);
    let iterations = s.run(max_iter)?;
    let flow = s.flow[..s.arc_num].to_vec();
    let total = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    debug_assert_eq!(s.n * s.m, s.arc_num);
    debug_assert_eq!(s.node_num, n + m);
    Some(Solution { flow, cost: total, iterations })
}
