//! Linear sum assignment by the Hungarian method (shortest augmenting paths
//! with potentials), for rectangular cost matrices.

/// Pairs `(row, col)` of a minimum-cost matching of `min(rows, cols)` pairs,
/// sorted by row. Entries must be finite; use a large value for forbidden
/// pairs.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == cols), "cost matrix rows differ in length");
    assert!(cost.iter().flatten().all(|v| v.is_finite()), "cost matrix has non-finite entries");

    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let mut pairs: Vec<(usize, usize)> = hungarian(&transposed).into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return pairs;
    }

    // rows <= cols; 1-based with column 0 as the virtual start
    let n = rows;
    let m = cols;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
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

    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

/// Sum of the matched entries.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| cost[r][c]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, k: usize, acc: f64, best: &mut f64) {
            let rows = cost.len();
            let cols = used.len();
            if k == 0 {
                *best = best.min(acc);
                return;
            }
            if row == rows {
                return;
            }
            // rows may stay unmatched only while enough rows remain
            if rows - row > k {
                rec(cost, row + 1, used, k, acc, best);
            }
            for c in 0..cols {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, k - 1, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cols], rows.min(cols), 0.0, &mut best);
        best
    }

    #[test]
    fn two_by_two_diagonal() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let p = hungarian(&c);
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&c, &p), 2.0);
    }

    #[test]
    fn one_by_one() {
        let c = vec![vec![7.0]];
        assert_eq!(hungarian(&c), vec![(0, 0)]);
    }

    #[test]
    fn empty_matrix() {
        assert!(hungarian(&[]).is_empty());
        assert!(hungarian(&[vec![]]).is_empty());
    }

    #[test]
    fn not_greedy() {
        // greedy row 0 takes col 0 (cost 1) and forces row 1 onto 10
        let c = vec![vec![1.0, 2.0], vec![1.0, 10.0]];
        let p = hungarian(&c);
        assert_eq!(p, vec![(0, 1), (1, 0)]);
        assert_eq!(assignment_cost(&c, &p), 3.0);
    }

    #[test]
    fn rectangular_shapes() {
        let wide = vec![vec![5.0, 1.0, 3.0]];
        assert_eq!(hungarian(&wide), vec![(0, 1)]);
        let tall = vec![vec![5.0], vec![1.0], vec![3.0]];
        assert_eq!(hungarian(&tall), vec![(1, 0)]);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0u32..50, c).prop_map(|row| row.into_iter().map(f64::from).collect()), r)
        })
    }

    proptest! {
        #[test]
        fn matches_permutation_brute_force(c in matrix()) {
            let p = hungarian(&c);
            prop_assert_eq!(p.len(), c.len().min(c[0].len()));
            let rows: std::collections::BTreeSet<_> = p.iter().map(|x| x.0).collect();
            let cols: std::collections::BTreeSet<_> = p.iter().map(|x| x.1).collect();
            prop_assert_eq!(rows.len(), p.len());
            prop_assert_eq!(cols.len(), p.len());
            prop_assert_eq!(assignment_cost(&c, &p), brute_force(&c));
        }
    }
}
