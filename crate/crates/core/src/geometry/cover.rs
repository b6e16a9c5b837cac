//! Discrete check of the stacked Calderon-Zygmund covering lemma on
//! finest-level cell indicators.
//!
//! Cells are indexed `t * N^n + sum_i x_i N^i` with `N = 2^depth` space cells
//! per axis and `4^depth` time cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{exact, exact_int};

/// Result of [`cz_cover_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub depth: u32,
    pub cells_a: u64,
    pub cells_b: u64,
    pub total_cells: u64,
    pub hypothesis_density: bool,
    pub hypothesis_stacks: bool,
    pub violating_cubes: u64,
    pub conclusion_holds: bool,
}

impl CoverReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypothesis_density && self.hypothesis_stacks
    }
}

struct Layout {
    n: usize,
    depth: u32,
}

impl Layout {
    fn detect(n: usize, len: usize) -> Result<Self> {
        if n == 0 || n > 3 {
            return invalid("space dimension must be 1..=3");
        }
        let bits = len.trailing_zeros() as usize;
        if len == 0 || !len.is_power_of_two() || !bits.is_multiple_of(n + 2) {
            return invalid(format!("{len} cells is not a dyadic grid for n = {n}"));
        }
        Ok(Self { n, depth: (bits / (n + 2)) as u32 })
    }

    fn side(&self) -> u64 {
        1 << self.depth
    }

    fn tside(&self) -> u64 {
        1 << (2 * self.depth)
    }

    fn index(&self, x: &[u64], t: u64) -> usize {
        let nside = self.side();
        let mut s = 0u64;
        for i in (0..self.n).rev() {
            s = s * nside + x[i];
        }
        (t * nside.pow(self.n as u32) + s) as usize
    }

    /// Visits every finest cell of the box `x_i in [lo_i, hi_i)`, `t in [tlo, thi)`.
    fn for_cells(&self, lo: &[u64], hi: &[u64], tlo: u64, thi: u64, mut f: impl FnMut(usize) -> bool) -> bool {
        let mut x = lo.to_vec();
        for t in tlo..thi {
            x.copy_from_slice(lo);
            loop {
                if !f(self.index(&x, t)) {
                    return false;
                }
                let mut axis = 0;
                loop {
                    if axis == self.n {
                        break;
                    }
                    x[axis] += 1;
                    if x[axis] < hi[axis] {
                        break;
                    }
                    x[axis] = lo[axis];
                    axis += 1;
                }
                if axis == self.n {
                    break;
                }
            }
        }
        true
    }
}

/// Per-level counts of `A` cells inside each dyadic cube, coarsest first.
fn pyramid(layout: &Layout, a: &[bool]) -> Vec<Vec<u64>> {
    let n = layout.n;
    let mut levels: Vec<Vec<u64>> = vec![a.iter().map(|&v| v as u64).collect()];
    for d in (1..=layout.depth).rev() {
        let fine = levels.last().unwrap();
        let side = 1u64 << d;
        let coarse_side = side / 2;
        let coarse_len = (coarse_side.pow(n as u32) * (1u64 << (2 * (d - 1)))) as usize;
        let mut coarse = vec![0u64; coarse_len];
        let space_cells = side.pow(n as u32);
        for (idx, &v) in fine.iter().enumerate() {
            let idx = idx as u64;
            let t = idx / space_cells;
            let mut rem = idx % space_cells;
            let mut cidx = 0u64;
            let mut mult = 1u64;
            for _ in 0..n {
                cidx += (rem % side) / 2 * mult;
                rem /= side;
                mult *= coarse_side;
            }
            cidx += (t / 4) * coarse_side.pow(n as u32);
            coarse[cidx as usize] += v;
        }
        levels.push(coarse);
    }
    levels.reverse();
    levels
}

/// Cells of the stacked predecessor of the depth-`d` cube (`xs`, `t`), or
/// `None` when the stack leaves the root.
fn stack_cells(layout: &Layout, d: u32, xs: &[u64], t: u64, m: u32) -> Option<(Vec<u64>, Vec<u64>, u64, u64)> {
    let shift = layout.depth - (d - 1);
    let space_scale = 1u64 << shift;
    let time_scale = 1u64 << (2 * shift);
    let lo: Vec<u64> = xs.iter().map(|&k| (k / 2) * space_scale).collect();
    let hi: Vec<u64> = lo.iter().map(|&v| v + space_scale).collect();
    let parent_t = t / 4;
    let tlo = (parent_t + 1) * time_scale;
    let thi = (parent_t + 1 + m as u64) * time_scale;
    if thi > layout.tside() {
        return None;
    }
    Some((lo, hi, tlo, thi))
}

fn decode(layout: &Layout, d: u32, idx: usize) -> (Vec<u64>, u64) {
    let side = 1u64 << d;
    let space_cells = side.pow(layout.n as u32);
    let idx = idx as u64;
    let mut rem = idx % space_cells;
    let mut xs = Vec::with_capacity(layout.n);
    for _ in 0..layout.n {
        xs.push(rem % side);
        rem /= side;
    }
    (xs, idx / space_cells)
}

/// Checks both hypotheses and the conclusion `|A| <= delta (m+1)/m |B|`
/// of the stacked covering lemma by exact cell counting.
pub fn cz_cover_check(n: usize, a: &[bool], b: &[bool], delta: f64, m: u32) -> Result<CoverReport> {
    if a.len() != b.len() {
        return invalid("indicator grids differ in size");
    }
    if !(delta > 0.0 && delta < 1.0) || m == 0 {
        return invalid("need 0 < delta < 1 and m >= 1");
    }
    let layout = Layout::detect(n, a.len())?;
    let total = a.len() as u64;
    let cells_a = a.iter().filter(|&&v| v).count() as u64;
    let cells_b = b.iter().filter(|&&v| v).count() as u64;
    let dq = exact(delta);
    let hypothesis_density = exact_int(cells_a as i64) <= dq.clone() * exact_int(total as i64);

    let counts = pyramid(&layout, a);
    let mut violating = 0u64;
    for d in 1..=layout.depth {
        let cube_cells = total >> ((n as u32 + 2) * d);
        let threshold = dq.clone() * exact_int(cube_cells as i64);
        for (idx, &c) in counts[d as usize].iter().enumerate() {
            if exact_int(c as i64) <= threshold {
                continue;
            }
            let (xs, t) = decode(&layout, d, idx);
            let ok = match stack_cells(&layout, d, &xs, t, m) {
                None => false,
                Some((lo, hi, tlo, thi)) => layout.for_cells(&lo, &hi, tlo, thi, |i| b[i]),
            };
            if !ok {
                violating += 1;
            }
        }
    }
    let lhs = exact_int(cells_a as i64) * exact_int(m as i64);
    let rhs = dq * exact_int(m as i64 + 1) * exact_int(cells_b as i64);
    Ok(CoverReport {
        depth: layout.depth,
        cells_a,
        cells_b,
        total_cells: total,
        hypothesis_density,
        hypothesis_stacks: violating == 0,
        violating_cubes: violating,
        conclusion_holds: lhs <= rhs,
    })
}

/// Draws indicator sets satisfying both hypotheses: `A` is a few partially
/// filled dyadic cubes plus scattered cells, and `B` is the union of every
/// required stack plus random extra cells. Returns `None` if no admissible
/// draw is found within the attempt budget.
pub fn random_cover_instance<R: Rng>(rng: &mut R, n: usize, depth: u32, delta: f64, m: u32) -> Option<(Vec<bool>, Vec<bool>)> {
    let layout = Layout { n, depth };
    let len = 1usize << ((n as u32 + 2) * depth);
    for _ in 0..2000 {
        let mut a = vec![false; len];
        let seeds = rng.random_range(1..=3);
        for _ in 0..seeds {
            let d = rng.random_range(2.max(depth.saturating_sub(1))..=depth.max(2));
            if d > depth {
                break;
            }
            let side = 1u64 << d;
            let xs: Vec<u64> = (0..n).map(|_| rng.random_range(0..side)).collect();
            let parent_slots = 1u64 << (2 * (d - 1));
            if parent_slots <= 1 + m as u64 {
                continue;
            }
            let t = 4 * rng.random_range(0..parent_slots - 1 - m as u64) + rng.random_range(0..4);
            let shift = depth - d;
            let lo: Vec<u64> = xs.iter().map(|&k| k << shift).collect();
            let hi: Vec<u64> = lo.iter().map(|&v| v + (1 << shift)).collect();
            let fill: f64 = rng.random_range(0.3..1.0);
            layout.for_cells(&lo, &hi, t << (2 * shift), (t + 1) << (2 * shift), |i| {
                if rng.random_bool(fill) {
                    a[i] = true;
                }
                true
            });
        }
        for v in a.iter_mut() {
            if rng.random_bool(0.002) {
                *v = true;
            }
        }
        let cells_a = a.iter().filter(|&&v| v).count() as f64;
        if cells_a == 0.0 || cells_a > delta * len as f64 {
            continue;
        }
        let mut b: Vec<bool> = (0..len).map(|_| rng.random_bool(0.05)).collect();
        let counts = pyramid(&layout, &a);
        let mut admissible = true;
        'outer: for d in 1..=depth {
            let cube_cells = (len as u64) >> ((n as u32 + 2) * d);
            for (idx, &c) in counts[d as usize].iter().enumerate() {
                if (c as f64) <= delta * cube_cells as f64 {
                    continue;
                }
                let (xs, t) = decode(&layout, d, idx);
                match stack_cells(&layout, d, &xs, t, m) {
                    None => {
                        admissible = false;
                        break 'outer;
                    }
                    Some((lo, hi, tlo, thi)) => {
                        layout.for_cells(&lo, &hi, tlo, thi, |i| {
                            b[i] = true;
                            true
                        });
                    }
                }
            }
        }
        if admissible {
            return Some((a, b));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rejects_misaligned_grids() {
        assert!(cz_cover_check(1, &[false; 10], &[false; 10], 0.5, 1).is_err());
        assert!(cz_cover_check(1, &[false; 16], &[false; 16], 0.5, 1).is_err());
        assert!(cz_cover_check(1, &[false; 8], &[false; 8], 0.5, 1).is_ok());
        assert!(cz_cover_check(1, &[false; 64], &[false; 64], 0.5, 1).is_ok());
    }

    #[test]
    fn empty_set_is_trivial() {
        let r = cz_cover_check(2, &[false; 256], &[false; 256], 0.3, 2).unwrap();
        assert!(r.hypotheses_hold() && r.conclusion_holds);
    }

    #[test]
    fn dense_top_cell_violates_stack_hypothesis() {
        // depth 1, n = 1: 2 x 4 cells; fill the top-left cell.
        let mut a = vec![false; 8];
        a[6] = true;
        let r = cz_cover_check(1, &a, &[true; 8], 0.2, 1).unwrap();
        assert!(r.hypothesis_density);
        assert!(!r.hypothesis_stacks);
    }

    #[test]
    fn pyramid_counts_are_consistent() {
        let layout = Layout { n: 2, depth: 2 };
        let mut rng = stream(1, "pyramid", 0);
        let a: Vec<bool> = (0..(1 << 8)).map(|_| rng.random_bool(0.3)).collect();
        let p = pyramid(&layout, &a);
        let total = a.iter().filter(|&&v| v).count() as u64;
        for level in &p {
            assert_eq!(level.iter().sum::<u64>(), total);
        }
        assert_eq!(p[0].len(), 1);
        assert_eq!(p[1].len(), 16);
    }

    #[test]
    fn random_instances_satisfy_conclusion() {
        for k in 0..40 {
            let mut rng = stream(3, "cover-test", k);
            let n = 1 + (k as usize % 2);
            let depth = 2 + (k as u32 % 2);
            let (a, b) = random_cover_instance(&mut rng, n, depth, 0.25, 1 + (k as u32 % 3)).expect("instance");
            let r = cz_cover_check(n, &a, &b, 0.25, 1 + (k as u32 % 3)).unwrap();
            assert!(r.hypotheses_hold());
            assert!(r.conclusion_holds, "{r:?}");
        }
    }
}
