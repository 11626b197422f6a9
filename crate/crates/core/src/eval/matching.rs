use crate::error::{Error, Result};
use crate::Point;

/// Minimum-cost assignment of rows to columns (Hungarian algorithm with
/// potentials, O(n²m)). Returns the column of each row; when there are more
/// rows than columns some rows stay unassigned.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let by_col = min_cost_assignment(&t);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }
    // 1-based potentials formulation; column 0 is a virtual source.
    let (n, m) = (rows, cols);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = Some(j - 1);
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// One-to-one matching between ground-truth and predicted points.
///
/// Maximizes the number of pairs closer than `eta`; among maximum matchings,
/// minimizes the summed distance. Pairs farther than `eta` are never returned.
/// Output is sorted by ground-truth index.
pub fn match_frame(gt: &[Point], pred: &[Point], eta: f64) -> Result<Vec<(usize, usize)>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param(format!("eta must be positive, got {eta}")));
    }
    let (n, m) = (gt.len(), pred.len());
    if n == 0 || m == 0 {
        return Ok(Vec::new());
    }
    // Split into connected components of the gated bipartite graph; the
    // optimum decomposes over them.
    let mut edges = Vec::new();
    let mut parent: Vec<usize> = (0..n + m).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pred[a].x.total_cmp(&pred[b].x));
    let xs: Vec<f64> = order.iter().map(|&j| pred[j].x).collect();
    for (i, g) in gt.iter().enumerate() {
        let start = xs.partition_point(|&x| x < g.x - eta);
        for k in start..m {
            if xs[k] > g.x + eta {
                break;
            }
            let j = order[k];
            let d = (g - pred[j]).norm();
            if d <= eta {
                edges.push((i, j, d));
                let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut comps: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().0.push(i);
    }
    for j in 0..m {
        let r = find(&mut parent, n + j);
        comps.entry(r).or_default().1.push(j);
    }
    let mut local = vec![usize::MAX; n + m];
    for (rows, cols) in comps.values() {
        for (k, &i) in rows.iter().enumerate() {
            local[i] = k;
        }
        for (k, &j) in cols.iter().enumerate() {
            local[n + j] = k;
        }
    }
    let mut comp_edges: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for &(i, j, d) in &edges {
        comp_edges.entry(find(&mut parent, i)).or_default().push((i, j, d));
    }

    let mut result = Vec::new();
    for (root, es) in comp_edges {
        let (rows, cols) = &comps[&root];
        if rows.len() == 1 && cols.len() == 1 {
            result.push((rows[0], cols[0]));
            continue;
        }
        // Every valid pair is worth more than any sum of distances.
        let big = eta * (rows.len().min(cols.len()) as f64 + 1.0) + 1.0;
        let mut cost = vec![vec![0.0; cols.len()]; rows.len()];
        let mut valid = vec![vec![false; cols.len()]; rows.len()];
        for (i, j, d) in es {
            let (r, c) = (local[i], local[n + j]);
            cost[r][c] = d - big;
            valid[r][c] = true;
        }
        for (r, c) in min_cost_assignment(&cost).into_iter().enumerate() {
            if let Some(c) = c {
                if valid[r][c] {
                    result.push((rows[r], cols[c]));
                }
            }
        }
    }
    result.sort_unstable();
    Ok(result)
}
