//! Premium/discount surplus and user utilities under truthful and
//! misreported types.
//!
//! Expectations over opponents are deterministic sums against the opponent
//! grids' CDF-increment weights, so identical inputs give bit-identical
//! results.

use crate::error::{Error, Result};
use crate::model::{
    flat_of, row_group_sum, Allocation, MechanismTable, ResourceCatalog, UserProfile,
};

/// Premium/discount surplus for one user's allocation row:
/// S = h(t)·Π_k (Σ_{j∈k} p_j) − l(t)·Σ_j p_j.
///
/// An empty group zeroes the whole premium product: no bonus without a
/// complete bundle.
pub fn premium_discount_term(
    catalog: &ResourceCatalog,
    profile: &UserProfile,
    p_row: &[f64],
    t: f64,
) -> f64 {
    let mut product = 1.0;
    for k in 0..catalog.num_groups() {
        product *= row_group_sum(catalog, p_row, k);
    }
    let total: f64 = p_row.iter().sum();
    profile.premium.at(t) * product - profile.discount.at(t) * total
}

/// Utility from one group at a fixed opponent profile:
/// Σ_{j∈k} p_j·v_j(t) − l(t)·Σ_{j∈k} p_j − cost_k.
pub fn group_utility(
    catalog: &ResourceCatalog,
    profile: &UserProfile,
    group: usize,
    p_row: &[f64],
    cost_k: f64,
    t: f64,
) -> Result<f64> {
    let mut value = 0.0;
    let mut held = 0.0;
    for j in catalog.group_range(group) {
        if p_row[j] != 0.0 {
            value += p_row[j] * profile.valuations[j].value(t)?;
        }
        held += p_row[j];
    }
    Ok(value - profile.discount.at(t) * held - cost_k)
}

/// Visit every joint grid point with `user` pinned to `node`; the callback
/// receives the flat joint index and the product of the opponents'
/// probability weights. Zero-weight points are skipped.
pub(crate) fn for_each_opponent_point<F>(
    mech: &MechanismTable,
    user: usize,
    node: usize,
    mut visit: F,
) where
    F: FnMut(usize, f64),
{
    let shape = mech.shape();
    let n = shape.len();
    let mut idx = vec![0usize; n];
    idx[user] = node;
    'point: loop {
        let mut w = 1.0;
        for m in 0..n {
            if m != user {
                w *= mech.grid(m).prob_weights()[idx[m]];
            }
        }
        if w > 0.0 {
            visit(flat_of(&idx, &shape), w);
        }
        let mut m = n;
        while m > 0 {
            m -= 1;
            if m == user {
                continue;
            }
            idx[m] += 1;
            if idx[m] < shape[m] {
                continue 'point;
            }
            idx[m] = 0;
        }
        return;
    }
}

fn resolve_node(mech: &MechanismTable, user: usize, t: f64) -> Result<usize> {
    mech.grid(user)
        .node_index(t)
        .ok_or(Error::OffGrid { user, t })
}

/// Expected utility when the true type is at node `true_node` and the
/// reported type at node `report_node`: allocation, surplus term, and cost
/// follow the report; valuations follow the truth.
fn utility_at_nodes(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    true_node: usize,
    report_node: usize,
) -> Result<f64> {
    let profile = &profiles[user];
    let t_true = mech.grid(user).node(true_node);
    let t_report = mech.grid(user).node(report_node);
    // lazy per-resource valuations at the true type; zero allocations never
    // force an evaluation (singular families at the domain edge)
    let mut vals: Vec<Option<f64>> = vec![None; catalog.num_resources()];
    let mut expectation = 0.0;
    let mut first_err: Option<Error> = None;
    for_each_opponent_point(mech, user, report_node, |flat, w| {
        if first_err.is_some() {
            return;
        }
        let alloc: &Allocation = mech.allocation_at_flat(flat);
        let row = alloc.row(user);
        let mut gross = 0.0;
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let v = match vals[j] {
                Some(v) => v,
                None => match profile.valuations[j].value(t_true) {
                    Ok(v) => {
                        vals[j] = Some(v);
                        v
                    }
                    Err(e) => {
                        first_err = Some(e);
                        return;
                    }
                },
            };
            gross += p * v;
        }
        gross += premium_discount_term(catalog, profile, row, t_report);
        expectation += w * gross;
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(expectation - mech.cost(user, report_node))
}

/// Expected utility of a truthful user of type `t` (a grid node).
pub fn total_utility(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    t: f64,
) -> Result<f64> {
    let node = resolve_node(mech, user, t)?;
    utility_at_nodes(catalog, profiles, mech, user, node, node)
}

/// Node-indexed variant of [`total_utility`].
pub fn total_utility_at_node(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    node: usize,
) -> Result<f64> {
    utility_at_nodes(catalog, profiles, mech, user, node, node)
}

/// Expected utility of a user whose true type is `true_t` but who reports
/// `fake_t` (both grid nodes).
pub fn misreport_utility(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    true_t: f64,
    fake_t: f64,
) -> Result<f64> {
    let true_node = resolve_node(mech, user, true_t)?;
    let fake_node = resolve_node(mech, user, fake_t)?;
    utility_at_nodes(catalog, profiles, mech, user, true_node, fake_node)
}

/// Node-indexed variant of [`misreport_utility`].
pub fn misreport_utility_at_nodes(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    true_node: usize,
    fake_node: usize,
) -> Result<f64> {
    utility_at_nodes(catalog, profiles, mech, user, true_node, fake_node)
}
