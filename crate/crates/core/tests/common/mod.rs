//! Brute-force oracles shared by the integration tests.

// each test binary uses a different subset
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use phaseloc::hyperbola::HyperbolaBranch;
use phaseloc::scenario::{Area, Pos};

/// Fine cells whose corners see sign changes of both residuals, found by a
/// coarse screen of `max(|r1|, |r2|)` over `bx` followed by a fine scan
/// around every coarse hit.
pub fn brute_root_cells(h1: &HyperbolaBranch, h2: &HyperbolaBranch, bx: &Area, hc: f64, hf: f64) -> HashSet<(i64, i64)> {
    let nx = (bx.width() / hc).ceil() as i64;
    let ny = (bx.height() / hc).ceil() as i64;
    let mut scanned: HashSet<(i64, i64)> = HashSet::new();
    let mut roots = HashSet::new();
    let fine = |i: i64, j: i64| Pos::new(bx.x_min + i as f64 * hf, bx.y_min + j as f64 * hf);
    // every root is within hc / sqrt(2) of a coarse point, and residual
    // gradients have norm at most 2
    let reach = 0.75 * hc;
    let span = (2.0 * reach / hf).ceil() as i64 + 1;
    for ix in 0..=nx {
        for iy in 0..=ny {
            let p = Pos::new(bx.x_min + ix as f64 * hc, bx.y_min + iy as f64 * hc);
            if h1.residual(&p).abs().max(h2.residual(&p).abs()) > 1.5 * hc {
                continue;
            }
            let i0 = ((p.x - reach - bx.x_min) / hf).floor() as i64;
            let j0 = ((p.y - reach - bx.y_min) / hf).floor() as i64;
            let n = (span + 1) as usize;
            let mut s1 = vec![false; n * n];
            let mut s2 = vec![false; n * n];
            for a in 0..n {
                for b in 0..n {
                    let q = fine(i0 + a as i64, j0 + b as i64);
                    s1[a * n + b] = h1.residual(&q) > 0.0;
                    s2[a * n + b] = h2.residual(&q) > 0.0;
                }
            }
            for a in 0..n - 1 {
                for b in 0..n - 1 {
                    let cell = (i0 + a as i64, j0 + b as i64);
                    if !scanned.insert(cell) {
                        continue;
                    }
                    let idx = [a * n + b, (a + 1) * n + b, a * n + b + 1, (a + 1) * n + b + 1];
                    let mixed = |s: &[bool]| idx.iter().any(|&k| s[k]) && idx.iter().any(|&k| !s[k]);
                    if mixed(&s1) && mixed(&s2) {
                        roots.insert(cell);
                    }
                }
            }
        }
    }
    roots
}

/// Groups cells lying within `link` cells of each other (Chebyshev). A
/// shallow crossing leaves a long, broken trail of cells that belong to a
/// single root.
pub fn clusters(cells: &HashSet<(i64, i64)>, link: i64) -> Vec<Vec<(i64, i64)>> {
    let list: Vec<(i64, i64)> = cells.iter().copied().collect();
    let mut label: Vec<usize> = (0..list.len()).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..list.len() {
        for j in 0..i {
            if (list[i].0 - list[j].0).abs() <= link && (list[i].1 - list[j].1).abs() <= link {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(i64, i64)>> = BTreeMap::new();
    for (i, &c) in list.iter().enumerate() {
        let r = find(&mut label, i);
        groups.entry(r).or_default().push(c);
    }
    groups.into_values().collect()
}

/// Center of fine cell `c` of the grid anchored at the lower-left corner of `bx`.
pub fn cell_center(bx: &Area, hf: f64, c: (i64, i64)) -> Pos {
    Pos::new(bx.x_min + (c.0 as f64 + 0.5) * hf, bx.y_min + (c.1 as f64 + 0.5) * hf)
}

/// Fine cell containing `p`.
pub fn cell_of(bx: &Area, hf: f64, p: &Pos) -> (i64, i64) {
    (((p.x - bx.x_min) / hf).floor() as i64, ((p.y - bx.y_min) / hf).floor() as i64)
}
