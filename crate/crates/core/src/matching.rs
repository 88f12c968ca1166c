//! Maximum-cardinality bipartite matching (augmenting paths).

/// Returns a maximum set of disjoint `(left, right)` pairs such that
/// `edge(left, right)` holds for each.
pub fn max_matching(n_left: usize, n_right: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let adj: Vec<Vec<usize>> = (0..n_left).map(|l| (0..n_right).filter(|&r| edge(l, r)).collect()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; n_right];
    for l in 0..n_left {
        let mut visited = vec![false; n_right];
        augment(l, &adj, &mut owner, &mut visited);
    }
    let mut pairs: Vec<(usize, usize)> = owner.iter().enumerate().filter_map(|(r, o)| o.map(|l| (l, r))).collect();
    pairs.sort_unstable();
    pairs
}

fn augment(l: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &r in &adj[l] {
        if visited[r] {
            continue;
        }
        visited[r] = true;
        if owner[r].is_none_or(|other| augment(other, adj, owner, visited)) {
            owner[r] = Some(l);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_would_fail_here() {
        // left 0 can take either; left 1 only right 0.
        let edges = [(0, 0), (0, 1), (1, 0)];
        let m = max_matching(2, 2, |l, r| edges.contains(&(l, r)));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn empty_sides() {
        assert!(max_matching(0, 3, |_, _| true).is_empty());
        assert!(max_matching(3, 0, |_, _| true).is_empty());
    }
}
