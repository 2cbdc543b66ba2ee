use std::cmp::Ordering;

use crate::grid::Grid;

/// Orders two offsets `(dr, dc)` by clockwise angle from north, so that
/// among equidistant candidates N comes before E, E before S, S before W.
pub(crate) fn clockwise_cmp(a: (isize, isize), b: (isize, isize)) -> Ordering {
    // x points east, y points north.
    let (xa, ya) = (a.1, -a.0);
    let (xb, yb) = (b.1, -b.0);
    let half = |x: isize, y: isize| if x > 0 || (x == 0 && y > 0) { 0 } else { 1 };
    half(xa, ya).cmp(&half(xb, yb)).then_with(|| {
        // Negative cross product: b lies clockwise of a.
        (xa * yb - ya * xb).cmp(&0)
    })
}

/// Nearest non-missing pixel to `(row, col)` in Euclidean distance, ties
/// broken by [`clockwise_cmp`]. The pixel itself is not a candidate.
pub(crate) fn nearest_valid(grid: &Grid, row: usize, col: usize) -> Option<(usize, usize)> {
    let (h, w) = (grid.height() as isize, grid.width() as isize);
    let (r0, c0) = (row as isize, col as isize);
    let mut best: Option<(isize, (isize, isize))> = None;
    let consider = |dr: isize, dc: isize, best: &mut Option<(isize, (isize, isize))>| {
        let (r, c) = (r0 + dr, c0 + dc);
        if r < 0 || c < 0 || r >= h || c >= w || grid.is_missing(r as usize, c as usize) {
            return;
        }
        let d2 = dr * dr + dc * dc;
        let better = match best {
            None => true,
            Some((bd, bdir)) => d2 < *bd || (d2 == *bd && clockwise_cmp((dr, dc), *bdir).is_lt()),
        };
        if better {
            *best = Some((d2, (dr, dc)));
        }
    };
    let max_radius = h.max(w);
    for radius in 1..=max_radius {
        if let Some((bd, _)) = best {
            if radius * radius > bd {
                break;
            }
        }
        for dc in -radius..=radius {
            consider(-radius, dc, &mut best);
            consider(radius, dc, &mut best);
        }
        for dr in -radius + 1..radius {
            consider(dr, -radius, &mut best);
            consider(dr, radius, &mut best);
        }
    }
    best.map(|(_, (dr, dc))| ((r0 + dr) as usize, (c0 + dc) as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinal_priority_is_n_e_s_w() {
        let n = (-1, 0);
        let e = (0, 1);
        let s = (1, 0);
        let w = (0, -1);
        assert!(clockwise_cmp(n, e).is_lt());
        assert!(clockwise_cmp(e, s).is_lt());
        assert!(clockwise_cmp(s, w).is_lt());
        assert!(clockwise_cmp(w, n).is_gt());
        assert!(clockwise_cmp((-1, 1), e).is_lt());
        assert!(clockwise_cmp((1, -1), w).is_lt());
    }

    #[test]
    fn equidistant_neighbours_resolve_to_north() {
        let mut g = Grid::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        g.set(1, 1, f64::NAN);
        assert_eq!(nearest_valid(&g, 1, 1), Some((0, 1)));
    }

    #[test]
    fn empty_grid_has_no_neighbour() {
        let g = Grid::filled(2, 2, f64::NAN);
        assert_eq!(nearest_valid(&g, 0, 0), None);
    }
}
