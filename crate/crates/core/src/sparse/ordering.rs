//! Fill-reducing ordering by recursive level-set bisection of the matrix graph.

use std::collections::VecDeque;

use super::CsrMatrix;

const LEAF: usize = 64;

/// Returns `perm` with `perm[k]` = original index eliminated at step k.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let adj = |i: usize| a.indices()[a.indptr()[i]..a.indptr()[i + 1]].iter().copied().filter(move |&j| j != i);

    // mark[v] == tag  <=> v belongs to the subset currently being split
    let mut mark = vec![0u32; n];
    let mut tag = 0u32;
    let mut level = vec![usize::MAX; n];
    let mut perm = Vec::with_capacity(n);

    // Each job is either a subset to split or a separator to emit after its
    // two halves have been emitted.
    enum Job {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }
    let mut stack = vec![Job::Split((0..n).collect())];
    let mut queue = VecDeque::new();
    let mut comp = Vec::new();

    while let Some(job) = stack.pop() {
        let set = match job {
            Job::Emit(sep) => {
                perm.extend(sep);
                continue;
            }
            Job::Split(set) => set,
        };
        if set.len() <= LEAF {
            perm.extend(set);
            continue;
        }
        tag += 1;
        for &v in &set {
            mark[v] = tag;
            level[v] = usize::MAX;
        }
        // First connected component, rooted at a pseudo-peripheral vertex.
        let bfs = |root: usize, level: &mut [usize], queue: &mut VecDeque<usize>, comp: &mut Vec<usize>| {
            comp.clear();
            level[root] = 0;
            queue.push_back(root);
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for w in adj(v) {
                    if mark[w] == tag && level[w] == usize::MAX {
                        level[w] = level[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
        };
        bfs(set[0], &mut level, &mut queue, &mut comp);
        let mut root = *comp.last().unwrap();
        for _ in 0..2 {
            for &v in &comp {
                level[v] = usize::MAX;
            }
            bfs(root, &mut level, &mut queue, &mut comp);
            root = *comp.last().unwrap();
        }
        if comp.len() < set.len() {
            // Disconnected: split off the component and treat the rest separately.
            let in_comp: Vec<usize> = comp.clone();
            let rest: Vec<usize> = set.iter().copied().filter(|&v| level[v] == usize::MAX).collect();
            stack.push(Job::Split(rest));
            stack.push(Job::Split(in_comp));
            continue;
        }
        let depth = level[*comp.last().unwrap()];
        if depth < 2 {
            perm.extend(set);
            continue;
        }
        let mut count = vec![0usize; depth + 1];
        for &v in &comp {
            count[level[v]] += 1;
        }
        let half = comp.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (l, &c) in count.iter().enumerate() {
            acc += c;
            if acc >= half {
                mid = l.clamp(1, depth - 1);
                break;
            }
        }
        let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
        for &v in &comp {
            let l = level[v];
            if l < mid {
                left.push(v);
            } else if l > mid {
                right.push(v);
            } else if adj(v).any(|w| mark[w] == tag && level[w] == mid + 1) {
                sep.push(v);
            } else {
                left.push(v);
            }
        }
        stack.push(Job::Emit(sep));
        stack.push(Job::Split(right));
        stack.push(Job::Split(left));
    }
    debug_assert_eq!(perm.len(), n);
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| i * nx + j;
        let mut t = Vec::new();
        for i in 0..nx {
            for j in 0..nx {
                t.push((id(i, j), id(i, j), 4.0));
                if i + 1 < nx {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                    t.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < nx {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                    t.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(nx * nx, nx * nx, &t)
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = grid(30);
        let mut p = nested_dissection(&a);
        p.sort_unstable();
        assert_eq!(p, (0..900).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_graph_is_covered() {
        let a = CsrMatrix::identity(200);
        let mut p = nested_dissection(&a);
        p.sort_unstable();
        assert_eq!(p, (0..200).collect::<Vec<_>>());
    }
}
