//! Dense bounded-variable dual simplex for `min c·x  s.t.  a_r·x >= b_r,  lo <= x <= hi`.
//!
//! Costs are lexicographic pairs: the second component only breaks ties among optima of
//! the first. Every structural variable must be boxed, and the starting point (each
//! variable at the bound its cost sign prefers) must be dual feasible, which holds for
//! any boxed problem. Surplus variables `w_r = a_r·x - b_r >= 0` form the initial basis.

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;

type Cost = [f64; 2];

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct BoxedLp {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<Cost>,
    pub rows: Vec<Row>,
}

#[derive(Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal(Vec<f64>),
    Infeasible,
}

fn lex_cmp(a: Cost, b: Cost) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    if (a[0] - b[0]).abs() > COST_TOL * (1.0 + a[0].abs().max(b[0].abs())) {
        return a[0].partial_cmp(&b[0]).unwrap_or(Equal);
    }
    if (a[1] - b[1]).abs() > COST_TOL * (1.0 + a[1].abs().max(b[1].abs())) {
        return a[1].partial_cmp(&b[1]).unwrap_or(Equal);
    }
    Equal
}

fn lex_negative(a: Cost) -> bool {
    lex_cmp(a, [0.0, 0.0]) == std::cmp::Ordering::Less
}

impl BoxedLp {
    pub fn solve(&self) -> LpOutcome {
        let n = self.lower.len();
        let m = self.rows.len();
        let width = n + m;
        let bland_after = 50 * (width + 1);

        // Tableau of B^-1 [A | -I] with the initial basis B = -I, plus rhs B^-1 b.
        let mut tab = vec![0.0; m * width];
        let mut rhs = vec![0.0; m];
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                tab[r * width + j] -= a;
            }
            tab[r * width + n + r] = 1.0;
            rhs[r] = -row.rhs;
        }

        let mut lo = self.lower.clone();
        let mut hi = self.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));

        let mut d: Vec<Cost> = self.cost.clone();
        d.extend(std::iter::repeat_n([0.0, 0.0], m));

        // Nonbasic variables sit at a bound; `at_upper` records which.
        let mut value = vec![0.0; width];
        let mut at_upper = vec![false; width];
        for j in 0..n {
            if lex_negative(d[j]) {
                debug_assert!(hi[j].is_finite(), "unbounded variable with negative cost");
                at_upper[j] = true;
                value[j] = hi[j];
            } else {
                value[j] = lo[j];
            }
        }
        let mut basis: Vec<usize> = (n..width).collect();
        let mut is_basic = vec![false; width];
        for &b in &basis {
            is_basic[b] = true;
        }

        let mut iter = 0usize;
        loop {
            iter += 1;
            let bland = iter > bland_after;
            // Basic values from the current nonbasic assignment.
            for r in 0..m {
                let row = &tab[r * width..(r + 1) * width];
                let mut v = rhs[r];
                for j in 0..width {
                    if !is_basic[j] && value[j] != 0.0 {
                        v -= row[j] * value[j];
                    }
                }
                value[basis[r]] = v;
            }

            // Leaving row: largest bound violation, or lowest variable index under Bland.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let b = basis[r];
                let v = value[b];
                let delta = if v < lo[b] - PRIMAL_TOL * lo[b].abs().max(1.0) {
                    v - lo[b]
                } else if v > hi[b] + PRIMAL_TOL * hi[b].abs().max(1.0) {
                    v - hi[b]
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lr, ld)) => {
                        if bland {
                            b < basis[lr]
                        } else {
                            delta.abs() > ld.abs()
                        }
                    }
                };
                if better {
                    leave = Some((r, delta));
                }
            }
            let Some((r, delta)) = leave else {
                return LpOutcome::Optimal(value[..n].to_vec());
            };

            let row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
            let sign = if delta < 0.0 { -1.0 } else { 1.0 };
            let mut enter: Option<(usize, Cost)> = None;
            for j in 0..width {
                if is_basic[j] || lo[j] == hi[j] {
                    continue;
                }
                let a = sign * row[j];
                let eligible = if at_upper[j] { a < -PIVOT_TOL } else { a > PIVOT_TOL };
                if !eligible {
                    continue;
                }
                let ratio = [d[j][0] / a, d[j][1] / a];
                let better = match enter {
                    None => true,
                    Some((_, best)) => lex_cmp(ratio, best) == std::cmp::Ordering::Less,
                };
                if better {
                    enter = Some((j, ratio));
                }
            }
            let Some((q, _)) = enter else {
                return LpOutcome::Infeasible;
            };

            let pivot = row[q];
            let theta = [d[q][0] / pivot, d[q][1] / pivot];
            for j in 0..width {
                if !is_basic[j] {
                    d[j][0] -= theta[0] * row[j];
                    d[j][1] -= theta[1] * row[j];
                }
            }
            let p = basis[r];
            d[q] = [0.0, 0.0];
            d[p] = [-theta[0], -theta[1]];

            // Pivot the tableau on (r, q).
            let inv = 1.0 / pivot;
            for x in &mut tab[r * width..(r + 1) * width] {
                *x *= inv;
            }
            rhs[r] *= inv;
            let pivot_row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = tab[i * width + q];
                if f == 0.0 {
                    continue;
                }
                let dst = &mut tab[i * width..(i + 1) * width];
                for (x, &pr) in dst.iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                dst[q] = 0.0;
                rhs[i] -= f * rhs[r];
            }

            // The leaving variable settles on the bound it violated.
            is_basic[p] = false;
            if delta < 0.0 {
                at_upper[p] = false;
                value[p] = lo[p];
            } else {
                at_upper[p] = true;
                value[p] = hi[p];
            }
            is_basic[q] = true;
            basis[r] = q;
        }
    }
}
