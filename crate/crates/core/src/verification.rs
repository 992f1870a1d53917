//! Numerical certification of individual rationality, incentive
//! compatibility, the envelope identity, allocation-value monotonicity, and
//! the revenue decomposition, for any mechanism table.
//!
//! Checks are exhaustive over the grid and return structured reports; they
//! never panic on a failing mechanism.

use crate::error::{Error, Result};
use crate::model::{Allocation, MechanismTable, ResourceCatalog, UserProfile};
use crate::solver::expected_revenue;
use crate::utility::{for_each_opponent_point, premium_discount_term, total_utility_at_node};

/// Outcome of one certification check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub check: &'static str,
    pub pass: bool,
    /// Worst margin: minimum utility (IR), maximum misreport gain (IC),
    /// maximum residual (envelope, decomposition), minimum slack
    /// (monotonicity).
    pub worst: f64,
    pub location: String,
}

impl CheckReport {
    fn error(check: &'static str, e: Error) -> Self {
        Self {
            check,
            pass: false,
            worst: f64::NAN,
            location: format!("evaluation error: {e}"),
        }
    }
}

/// Absolute tolerance used for the IR/IC checks by default.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Opponent-averaged allocation row and surplus term per own node:
/// `p_bar[a][j] = E_opp[p_ij]`, `s_bar[a] = E_opp[S_i]`.
fn averaged_rows(
    catalog: &ResourceCatalog,
    profile: &UserProfile,
    mech: &MechanismTable,
    user: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let r = mech.grid(user).len();
    let m = mech.num_resources();
    let mut p_bar = vec![vec![0.0f64; m]; r];
    let mut s_bar = vec![0.0f64; r];
    for a in 0..r {
        let t = mech.grid(user).node(a);
        for_each_opponent_point(mech, user, a, |flat, w| {
            let row = mech.allocation_at_flat(flat).row(user);
            for (j, &p) in row.iter().enumerate() {
                p_bar[a][j] += w * p;
            }
            s_bar[a] += w * premium_discount_term(catalog, profile, row, t);
        });
    }
    (p_bar, s_bar)
}

/// Individual rationality: truthful utility is nonnegative at every node.
pub fn check_ir(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    tol: f64,
) -> CheckReport {
    let mut worst = f64::INFINITY;
    let mut location = String::from("-");
    for (i, _) in profiles.iter().enumerate() {
        for a in 0..mech.grid(i).len() {
            let u = match total_utility_at_node(catalog, profiles, mech, i, a) {
                Ok(u) => u,
                Err(e) => return CheckReport::error("ir", e),
            };
            if u < worst {
                worst = u;
                location = format!("user {i}, t = {}", mech.grid(i).node(a));
            }
        }
    }
    CheckReport {
        check: "ir",
        pass: worst >= -tol,
        worst,
        location,
    }
}

/// Incentive compatibility: no misreport beats the truthful report, over
/// every (true, reported) grid pair of every user.
pub fn check_ic(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    tol: f64,
) -> CheckReport {
    let mut worst_gain = f64::NEG_INFINITY;
    let mut location = String::from("-");
    for (i, profile) in profiles.iter().enumerate() {
        let grid = mech.grid(i);
        let r = grid.len();
        let (p_bar, s_bar) = averaged_rows(catalog, profile, mech, i);
        // node values, lazily guarded: a NaN only matters under nonzero p_bar
        let vals: Vec<Vec<f64>> = grid
            .nodes()
            .iter()
            .map(|&t| {
                profile
                    .valuations
                    .iter()
                    .map(|v| v.value(t).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let gross = |report: usize, truth: usize| -> std::result::Result<f64, Error> {
            let mut g = s_bar[report];
            for (j, &p) in p_bar[report].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let v = vals[truth][j];
                if v.is_nan() {
                    return Err(Error::ValuationDomain {
                        t: grid.node(truth),
                        reason: format!("singular valuation of resource {j} under nonzero allocation"),
                    });
                }
                g += p * v;
            }
            Ok(g)
        };
        for a in 0..r {
            let truthful = match gross(a, a) {
                Ok(g) => g - mech.cost(i, a),
                Err(e) => return CheckReport::error("ic", e),
            };
            for b in 0..r {
                if b == a {
                    continue;
                }
                let misreport = match gross(b, a) {
                    Ok(g) => g - mech.cost(i, b),
                    Err(e) => return CheckReport::error("ic", e),
                };
                let gain = misreport - truthful;
                if gain > worst_gain {
                    worst_gain = gain;
                    location = format!(
                        "user {i}, true t = {}, reported t = {}",
                        grid.node(a),
                        grid.node(b)
                    );
                }
            }
        }
    }
    CheckReport {
        check: "ic",
        pass: worst_gain <= tol,
        worst: worst_gain,
        location,
    }
}

/// Marginal-utility increments per own node, read step-wise with exact
/// valuation increments: m[b] = E_opp[Σ_j p_ij(x_b)·(v_j(x_b) − v_j(x_{b−1}))].
fn marginal_increments(
    profile: &UserProfile,
    mech: &MechanismTable,
    user: usize,
    p_bar: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let grid = mech.grid(user);
    let r = grid.len();
    let mut m = vec![0.0f64; r];
    for b in 1..r {
        let mut inc = 0.0;
        for (j, &p) in p_bar[b].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let hi = profile.valuations[j].value(grid.node(b))?;
            let lo = profile.valuations[j].value(grid.node(b - 1))?;
            inc += p * (hi - lo);
        }
        m[b] = inc;
    }
    Ok(m)
}

/// Envelope identity: u(t) − u(t_low) equals the cumulative quadrature of
/// E_opp{Σ_j v′_ij·p_ij}. The quadrature here samples the analytic
/// derivative at interval endpoints (trapezoid in v′), an independent route
/// from the cost rule's exact valuation increments; the residual passes at
/// 10/R².
pub fn check_envelope(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
) -> CheckReport {
    let mut worst = 0.0f64;
    let mut location = String::from("-");
    let mut tolerance = 0.0f64;
    for (i, profile) in profiles.iter().enumerate() {
        if profile.type_dist.is_point_mass() {
            continue;
        }
        let grid = mech.grid(i);
        let r = grid.len();
        tolerance = tolerance.max(10.0 / (r as f64 * r as f64));
        let (p_bar, _) = averaged_rows(catalog, profile, mech, i);
        let u0 = match total_utility_at_node(catalog, profiles, mech, i, 0) {
            Ok(u) => u,
            Err(e) => return CheckReport::error("envelope", e),
        };
        let mut cumulative = 0.0f64;
        for a in 1..r {
            let step = grid.node(a) - grid.node(a - 1);
            for (j, &p) in p_bar[a].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let d_lo = profile.valuations[j].derivative_extended(grid.node(a - 1));
                let d_hi = profile.valuations[j].derivative_extended(grid.node(a));
                if d_lo.is_finite() && d_hi.is_finite() {
                    cumulative += p * 0.5 * (d_lo + d_hi) * step;
                } else {
                    // singular endpoint: fall back to the exact increment
                    let hi = profile.valuations[j].value(grid.node(a)).unwrap_or(f64::NAN);
                    let lo = profile.valuations[j]
                        .value(grid.node(a - 1))
                        .unwrap_or(f64::NAN);
                    if hi.is_nan() || lo.is_nan() {
                        return CheckReport::error(
                            "envelope",
                            Error::ValuationDomain {
                                t: grid.node(a),
                                reason: format!("singular valuation of resource {j}"),
                            },
                        );
                    }
                    cumulative += p * (hi - lo);
                }
            }
            let u = match total_utility_at_node(catalog, profiles, mech, i, a) {
                Ok(u) => u,
                Err(e) => return CheckReport::error("envelope", e),
            };
            let residual = (u - u0 - cumulative).abs();
            if residual > worst {
                worst = residual;
                location = format!("user {i}, t = {}", grid.node(a));
            }
        }
    }
    CheckReport {
        check: "envelope",
        pass: worst <= tolerance,
        worst,
        location,
    }
}

/// The pairwise monotonicity condition: for every (true, reported) pair,
/// the marginal-utility integral between the two types dominates the value
/// difference on the reported allocation.
pub fn check_monotonicity(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    tol: f64,
) -> CheckReport {
    let mut worst_slack = f64::INFINITY;
    let mut location = String::from("-");
    for (i, profile) in profiles.iter().enumerate() {
        if profile.type_dist.is_point_mass() {
            continue;
        }
        let grid = mech.grid(i);
        let r = grid.len();
        let (p_bar, _) = averaged_rows(catalog, profile, mech, i);
        let m = match marginal_increments(profile, mech, i, &p_bar) {
            Ok(m) => m,
            Err(e) => return CheckReport::error("monotonicity", e),
        };
        let mut cumulative = vec![0.0f64; r];
        for b in 1..r {
            cumulative[b] = cumulative[b - 1] + m[b];
        }
        let vals: Vec<Vec<f64>> = grid
            .nodes()
            .iter()
            .map(|&t| {
                profile
                    .valuations
                    .iter()
                    .map(|v| v.value(t).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        for a in 0..r {
            for b in 0..r {
                // LHS: ∫ between reported and true type; RHS: value gap on
                // the reported allocation
                let lhs = cumulative[a] - cumulative[b];
                let mut rhs = 0.0;
                let mut bad = None;
                for (j, &p) in p_bar[b].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    if vals[a][j].is_nan() || vals[b][j].is_nan() {
                        bad = Some(j);
                        break;
                    }
                    rhs += p * (vals[a][j] - vals[b][j]);
                }
                if let Some(j) = bad {
                    return CheckReport::error(
                        "monotonicity",
                        Error::ValuationDomain {
                            t: grid.node(a),
                            reason: format!("singular valuation of resource {j}"),
                        },
                    );
                }
                let slack = lhs - rhs;
                if slack < worst_slack {
                    worst_slack = slack;
                    location = format!(
                        "user {i}, true t = {}, reported t = {}",
                        grid.node(a),
                        grid.node(b)
                    );
                }
            }
        }
    }
    CheckReport {
        check: "monotonicity",
        pass: worst_slack >= -tol,
        worst: worst_slack,
        location,
    }
}

/// Revenue decomposition: the direct cost-sum revenue equals the virtual
/// surplus minus the bottom utilities. The hazard term is evaluated in its
/// summation-by-parts form Σ_b (1 − F(x_{b−1}))·m_b, the discrete twin of
/// E{((1−F)/f)·v′·p}, so the identity is exact for step mechanisms.
pub fn check_revenue_decomposition(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    tol: f64,
) -> CheckReport {
    let direct = expected_revenue(mech);
    let mut virtual_side = 0.0f64;
    for (i, profile) in profiles.iter().enumerate() {
        let grid = mech.grid(i);
        let r = grid.len();
        let (p_bar, s_bar) = averaged_rows(catalog, profile, mech, i);
        // E_t[Σ p v + S]
        let mut gross = 0.0;
        for a in 0..r {
            let w = grid.prob_weights()[a];
            if w == 0.0 {
                continue;
            }
            let mut g = s_bar[a];
            for (j, &p) in p_bar[a].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                match profile.valuations[j].value(grid.node(a)) {
                    Ok(v) => g += p * v,
                    Err(e) => return CheckReport::error("revenue-decomposition", e),
                }
            }
            gross += w * g;
        }
        // hazard-weighted marginal value (summation by parts)
        let mut hazard_term = 0.0;
        if !profile.type_dist.is_point_mass() {
            let m = match marginal_increments(profile, mech, i, &p_bar) {
                Ok(m) => m,
                Err(e) => return CheckReport::error("revenue-decomposition", e),
            };
            for b in 1..r {
                let survival = 1.0 - profile.type_dist.cdf(grid.node(b - 1));
                hazard_term += survival * m[b];
            }
        }
        let u0 = match total_utility_at_node(catalog, profiles, mech, i, 0) {
            Ok(u) => u,
            Err(e) => return CheckReport::error("revenue-decomposition", e),
        };
        virtual_side += gross - hazard_term - u0;
    }
    let residual = (direct - virtual_side).abs();
    CheckReport {
        check: "revenue-decomposition",
        pass: residual <= tol * (1.0 + direct.abs()),
        worst: residual,
        location: format!("direct = {direct}, virtual = {virtual_side}"),
    }
}

/// Exhaustive brute-force search over the fractional allocation grid
/// {0, 1/steps, …, 1}^(N×M), feasibility-filtered. Independent oracle for
/// the vertex-optimality claim; exponential, for small instances only.
pub fn oracle_allocation_search(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    joint_t: &[f64],
    steps: usize,
    budget: u128,
) -> Result<Allocation> {
    let n = profiles.len();
    let m = catalog.num_resources();
    // feasible per-resource columns: levels summing to at most `steps`
    let mut columns: Vec<Vec<usize>> = Vec::new();
    let mut col = vec![0usize; n];
    loop {
        if col.iter().sum::<usize>() <= steps {
            columns.push(col.clone());
        }
        let mut i = n;
        let mut done = true;
        while i > 0 {
            i -= 1;
            col[i] += 1;
            if col[i] <= steps {
                done = false;
                break;
            }
            col[i] = 0;
        }
        if done {
            break;
        }
    }
    let candidates = (columns.len() as u128).pow(m as u32);
    if candidates > budget {
        return Err(Error::SearchSpaceTooLarge { candidates, budget });
    }

    let w: Vec<Vec<f64>> = profiles
        .iter()
        .zip(joint_t)
        .map(|(p, &t)| {
            p.valuations
                .iter()
                .map(|v| {
                    crate::valuation::virtual_valuation_extended(v, &p.type_dist, t)
                })
                .collect()
        })
        .collect();
    let h: Vec<f64> = profiles
        .iter()
        .zip(joint_t)
        .map(|(p, &t)| p.premium.at(t))
        .collect();
    let l: Vec<f64> = profiles
        .iter()
        .zip(joint_t)
        .map(|(p, &t)| p.discount.at(t))
        .collect();
    // per-resource, per-column linear gain Σ_i (w_ij − l_i)·p
    let scale = 1.0 / steps as f64;
    let linear: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            columns
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(i, &lvl)| {
                            if lvl == 0 {
                                0.0
                            } else {
                                (w[i][j] - l[i]) * lvl as f64 * scale
                            }
                        })
                        .sum()
                })
                .collect()
        })
        .collect();

    struct Search<'a> {
        catalog: &'a ResourceCatalog,
        columns: &'a [Vec<usize>],
        linear: &'a [Vec<f64>],
        h: &'a [f64],
        scale: f64,
        n: usize,
        m: usize,
        best: f64,
        best_choice: Vec<usize>,
        choice: Vec<usize>,
    }

    impl Search<'_> {
        // product[i] = Π over completed groups of that user's group sum
        fn descend(&mut self, j: usize, lin: f64, group_sum: &[f64], product: &[f64]) {
            if j == self.m {
                let mut obj = lin;
                for i in 0..self.n {
                    obj += self.h[i] * product[i];
                }
                if obj > self.best {
                    self.best = obj;
                    self.best_choice.copy_from_slice(&self.choice);
                }
                return;
            }
            let (group, _) = self.catalog.locate(j).unwrap();
            let closes_group = j + 1 == self.catalog.group_range(group).end;
            for (c, col) in self.columns.iter().enumerate() {
                self.choice[j] = c;
                let lin = lin + self.linear[j][c];
                if lin == f64::NEG_INFINITY {
                    continue;
                }
                let mut gs = group_sum.to_vec();
                for i in 0..self.n {
                    gs[i] += col[i] as f64 * self.scale;
                }
                if closes_group {
                    let mut prod = product.to_vec();
                    for i in 0..self.n {
                        prod[i] *= gs[i];
                    }
                    let zeros = vec![0.0; self.n];
                    self.descend(j + 1, lin, &zeros, &prod);
                } else {
                    self.descend(j + 1, lin, &gs, product);
                }
            }
        }
    }

    let mut search = Search {
        catalog,
        columns: &columns,
        linear: &linear,
        h: &h,
        scale,
        n,
        m,
        best: f64::NEG_INFINITY,
        best_choice: vec![0; m],
        choice: vec![0; m],
    };
    let zeros = vec![0.0; n];
    let ones = vec![1.0; n];
    search.descend(0, 0.0, &zeros, &ones);

    let mut alloc = Allocation::zeros(n, m);
    for (j, &c) in search.best_choice.iter().enumerate() {
        for (i, &lvl) in columns[c].iter().enumerate() {
            alloc.set(i, j, lvl as f64 * scale);
        }
    }
    Ok(alloc)
}
