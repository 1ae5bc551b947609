//! Exhaustive reference for threshold sweeps, written without the
//! library's evaluator or frontier code.

use super::Toy;

/// Exit stage by direct comparison: stay at the first stage whose
/// confidence is not below its threshold.
pub fn oracle_exit(row: &[(f64, bool)], taus: &[f64]) -> usize {
    for (k, &tau) in taus.iter().enumerate() {
        if row[k].0 >= tau {
            return k;
        }
    }
    taus.len()
}

pub fn oracle_point(toy: &Toy, taus: &[f64]) -> (f64, f64) {
    let passages = toy.policy.ob_passages();
    let mut cost = 0.0;
    let mut hits = 0;
    for row in &toy.table {
        let exit = oracle_exit(row, taus);
        let mut c = toy.policy.cost.c_cb;
        for s in &passages[..exit] {
            c += f64::from(*s) * toy.policy.cost.c_ob;
        }
        cost += c;
        hits += usize::from(row[exit].1);
    }
    let n = toy.table.len() as f64;
    (cost / n, hits as f64 / n)
}

/// Every threshold placement that can change a decision: 0, each observed
/// confidence, and infinity.
pub fn oracle_axis(toy: &Toy, stage: usize) -> Vec<f64> {
    let mut v: Vec<f64> = toy.table.iter().map(|r| r[stage].0).collect();
    v.push(0.0);
    v.push(f64::INFINITY);
    v
}

pub fn oracle_points(toy: &Toy) -> Vec<(f64, f64)> {
    let k = toy.policy.iterations();
    let axes: Vec<Vec<f64>> = (0..k).map(|s| oracle_axis(toy, s)).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let taus: Vec<f64> = idx.iter().enumerate().map(|(s, &i)| axes[s][i]).collect();
        out.push(oracle_point(toy, &taus));
        let mut s = 0;
        loop {
            if s == k {
                return out;
            }
            idx[s] += 1;
            if idx[s] < axes[s].len() {
                break;
            }
            idx[s] = 0;
            s += 1;
        }
    }
}

/// Nondominated points by the pairwise definition, as a sorted set.
pub fn oracle_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut keep: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| {
            !points
                .iter()
                .any(|q| (q.0 <= p.0 && q.1 > p.1) || (q.0 < p.0 && q.1 >= p.1))
        })
        .cloned()
        .collect();
    keep.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keep.dedup();
    keep
}

/// Cost-sorted set keeping the best accuracy at each cost.
pub fn oracle_raw(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    v.dedup_by(|a, b| a.0 == b.0);
    v
}

