use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{check_set, DirectedGraph};
use crate::error::{Error, Result};

/// Outcome of a strong-robustness check. When the graph is not robust,
/// `witness` is a non-empty set disjoint from the sources that is not
/// r-reachable: a single agent with fewer than `r` in-neighbors when there is
/// one, otherwise everything percolation left `inactive`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robustness {
    pub robust: bool,
    pub inactive: BTreeSet<usize>,
    pub witness: BTreeSet<usize>,
}

fn outside_count(g: &DirectedGraph, i: usize, set: &BTreeSet<usize>) -> usize {
    g.in_neighbors(i).iter().filter(|j| !set.contains(j)).count()
}

/// Some member of `set` has at least `r` in-neighbors outside the set.
pub fn r_reachable(g: &DirectedGraph, set: &BTreeSet<usize>, r: usize) -> Result<bool> {
    check_set(g.n(), set, "set")?;
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    Ok(set.iter().any(|&i| outside_count(g, i, set) >= r))
}

/// Whether every non-empty subset of `V \ sources` is r-reachable.
///
/// Decided by bootstrap percolation: start with `sources` active and keep
/// activating any node with at least `r` active in-neighbors. The graph is
/// robust iff everything ends up active; otherwise the inactive remainder is
/// itself a counterexample and is returned as the witness.
pub fn strongly_r_robust_wrt(g: &DirectedGraph, sources: &BTreeSet<usize>, r: usize) -> Result<Robustness> {
    check_set(g.n(), sources, "source set")?;
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    let n = g.n();
    let mut active = vec![false; n];
    let mut active_in = vec![0usize; n];
    let activate = |v: usize, active: &mut [bool], active_in: &mut [usize]| {
        active[v] = true;
        for &w in g.out_neighbors(v) {
            active_in[w] += 1;
        }
    };
    for &s in sources {
        activate(s, &mut active, &mut active_in);
    }
    loop {
        let mut changed = false;
        for v in 0..n {
            if !active[v] && active_in[v] >= r {
                activate(v, &mut active, &mut active_in);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inactive: BTreeSet<usize> = (0..n).filter(|&v| !active[v]).collect();
    let witness = match inactive.iter().find(|&&v| g.in_neighbors(v).len() < r) {
        Some(&v) => BTreeSet::from([v]),
        None => inactive.clone(),
    };
    Ok(Robustness {
        robust: inactive.is_empty(),
        inactive,
        witness,
    })
}
