use super::nearest::nearest_valid;
use crate::grid::Grid;

/// Whether a valid pixel exists along each cardinal ray from `(row, col)`,
/// in N, E, S, W order.
fn cardinal_support(grid: &Grid, row: usize, col: usize) -> [bool; 4] {
    let (h, w) = grid.dims();
    let valid = |r: usize, c: usize| !grid.is_missing(r, c);
    [
        (0..row).rev().any(|r| valid(r, col)),
        (col + 1..w).any(|c| valid(row, c)),
        (row + 1..h).any(|r| valid(r, col)),
        (0..col).rev().any(|c| valid(row, c)),
    ]
}

/// Fills recovery pixels: missing pixels with a valid pixel somewhere along
/// at least three of the four cardinal rays take the value of their nearest
/// valid pixel.
///
/// Each pass decides every fill from the grid as it stood at the start of
/// the pass; passes repeat until nothing changes. Returns the filled grid
/// and the number of pixels filled.
pub fn fill_recovery_pixels(grid: &Grid) -> (Grid, usize) {
    let mut current = grid.clone();
    let mut total = 0;
    loop {
        let mut fills = Vec::new();
        for r in 0..current.height() {
            for c in 0..current.width() {
                if !current.is_missing(r, c) {
                    continue;
                }
                let support = cardinal_support(&current, r, c);
                if support.iter().filter(|&&s| s).count() < 3 {
                    continue;
                }
                if let Some((nr, nc)) = nearest_valid(&current, r, c) {
                    fills.push((r, c, current.get(nr, nc)));
                }
            }
        }
        if fills.is_empty() {
            return (current, total);
        }
        total += fills.len();
        for (r, c, v) in fills {
            current.set(r, c, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Reference implementation: exhaustive scans, atan2 tie-breaking.
    fn brute_force(grid: &Grid) -> Grid {
        let (h, w) = grid.dims();
        let mut cur = grid.clone();
        loop {
            let snap = cur.clone();
            let mut changed = false;
            for r in 0..h {
                for c in 0..w {
                    if !snap.is_missing(r, c) {
                        continue;
                    }
                    let mut dirs = 0;
                    for (dr, dc) in [(-1i64, 0i64), (0, 1), (1, 0), (0, -1)] {
                        let (mut rr, mut cc) = (r as i64 + dr, c as i64 + dc);
                        while rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 {
                            if !snap.is_missing(rr as usize, cc as usize) {
                                dirs += 1;
                                break;
                            }
                            rr += dr;
                            cc += dc;
                        }
                    }
                    if dirs < 3 {
                        continue;
                    }
                    let mut best: Option<(i64, f64, f64)> = None;
                    for rr in 0..h {
                        for cc in 0..w {
                            if snap.is_missing(rr, cc) {
                                continue;
                            }
                            let dr = rr as i64 - r as i64;
                            let dc = cc as i64 - c as i64;
                            let d2 = dr * dr + dc * dc;
                            let mut ang = (dc as f64).atan2(-dr as f64);
                            if ang < 0.0 {
                                ang += std::f64::consts::TAU;
                            }
                            let take = match best {
                                None => true,
                                Some((bd, ba, _)) => d2 < bd || (d2 == bd && ang < ba),
                            };
                            if take {
                                best = Some((d2, ang, snap.get(rr, cc)));
                            }
                        }
                    }
                    if let Some((_, _, v)) = best {
                        cur.set(r, c, v);
                        changed = true;
                    }
                }
            }
            if !changed {
                return cur;
            }
        }
    }

    #[test]
    fn isolated_hole_takes_northern_value() {
        let mut g = Grid::from_fn(3, 3, |r, c| (10 * r + c) as f64);
        g.set(1, 1, f64::NAN);
        let (out, n) = fill_recovery_pixels(&g);
        assert_eq!(n, 1);
        assert_eq!(out.get(1, 1), 1.0);
    }

    #[test]
    fn corner_hole_with_two_supports_stays_missing() {
        let mut g = Grid::filled(4, 4, 1.0);
        g.set(0, 0, f64::NAN);
        let (out, n) = fill_recovery_pixels(&g);
        assert_eq!(n, 0);
        assert!(out.is_missing(0, 0));
    }

    #[test]
    fn matches_exhaustive_reference_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let mut g = Grid::from_fn(20, 20, |_, _| rng.random_range(0.0..100.0));
            for v in g.data_mut() {
                if rng.random_bool(0.05) {
                    *v = f64::NAN;
                }
            }
            // A clustered hole as well, to exercise multi-pass fills.
            let (r0, c0) = (rng.random_range(0..16), rng.random_range(0..16));
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    g.set(r, c, f64::NAN);
                }
            }
            let (fast, _) = fill_recovery_pixels(&g);
            let slow = brute_force(&g);
            let bits = |x: &Grid| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&fast), bits(&slow));
        }
    }
}
