//! Revenue-optimal mechanism computation: pointwise virtual-surplus
//! maximization over vertex allocations, and envelope-based cost charging.
//!
//! The surplus objective is affine in each allocation coordinate (the
//! premium term is multilinear), so some maximizer assigns every resource
//! wholly to one user or to nobody. The solver enumerates that vertex set
//! per joint grid point; the brute-force fractional oracle in the
//! verification module guards the argument.
//!
//! Discrete mechanisms are read as step functions of type: the allocation
//! chosen at node x_b applies on (x_{b−1}, x_b]. Expectations use CDF
//! increments and the cost rule's inner integral uses exact valuation
//! increments Σ_j p_ij(x_b)·(v_ij(x_b) − v_ij(x_{b−1})), so the envelope
//! identity and the bottom-type zero-utility condition hold to machine
//! precision, and the single-good posted-price closed form is reproduced
//! exactly.

use crate::error::{Error, Result};
use crate::model::{
    unflat_into, Allocation, MechanismTable, ResourceCatalog, TypeGrid, UserProfile,
};
use crate::utility::{for_each_opponent_point, premium_discount_term};
use crate::valuation::{virtual_valuation, virtual_valuation_extended};

/// A solved mechanism plus any regularity warnings collected on the way.
#[derive(Debug)]
pub struct SolveOutput {
    pub mechanism: MechanismTable,
    pub warnings: Vec<String>,
}

/// Virtual surplus of a feasible allocation at one joint type point:
/// Σ_i [Σ_j w_ij(t_i)·p_ij + S_i(t_i)], where w is the virtual valuation
/// for users with a proper type law and the raw valuation for point-mass
/// users.
pub fn virtual_surplus_at(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    joint_t: &[f64],
    alloc: &Allocation,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, profile) in profiles.iter().enumerate() {
        let t = joint_t[i];
        let row = alloc.row(i);
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let w = if profile.type_dist.is_point_mass() {
                profile.valuations[j].value(t)?
            } else {
                virtual_valuation(&profile.valuations[j], &profile.type_dist, t)?
            };
            total += p * w;
        }
        total += premium_discount_term(catalog, profile, row, t);
    }
    Ok(total)
}

/// Per-user virtual valuations with limiting conventions, one entry per
/// resource. Entries may be −∞ (never allocate).
fn virtual_rows(profiles: &[UserProfile], joint_t: &[f64]) -> Vec<Vec<f64>> {
    profiles
        .iter()
        .zip(joint_t)
        .map(|(profile, &t)| {
            profile
                .valuations
                .iter()
                .map(|v| virtual_valuation_extended(v, &profile.type_dist, t))
                .collect()
        })
        .collect()
}

/// Vertex enumeration: each resource goes wholly to one user or to nobody.
/// Ties prefer leaving the resource unassigned, then the lower user index.
fn best_vertex(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    joint_t: &[f64],
    virtual_values: &[Vec<f64>],
) -> Allocation {
    let n = profiles.len();
    let m = catalog.num_resources();
    // owner digit per resource: 0 = unassigned, i+1 = user i; counting with
    // the last resource fastest walks candidates in lexicographic order, so
    // requiring a strict improvement realizes the tie-break.
    let mut owners = vec![0usize; m];
    let mut best_owners = owners.clone();
    let mut best = f64::NEG_INFINITY;
    let mut rows = vec![vec![0.0f64; m]; n];
    'candidate: loop {
        let mut objective = 0.0;
        for row in rows.iter_mut() {
            row.iter_mut().for_each(|p| *p = 0.0);
        }
        for (j, &owner) in owners.iter().enumerate() {
            if owner > 0 {
                let i = owner - 1;
                rows[i][j] = 1.0;
                objective += virtual_values[i][j];
            }
        }
        if objective.is_finite() || objective == f64::INFINITY {
            for (i, profile) in profiles.iter().enumerate() {
                objective += premium_discount_term(catalog, profile, &rows[i], joint_t[i]);
            }
            if objective > best {
                best = objective;
                best_owners.copy_from_slice(&owners);
            }
        }
        let mut j = m;
        while j > 0 {
            j -= 1;
            owners[j] += 1;
            if owners[j] <= n {
                continue 'candidate;
            }
            owners[j] = 0;
        }
        break;
    }
    let mut alloc = Allocation::zeros(n, m);
    for (j, &owner) in best_owners.iter().enumerate() {
        if owner > 0 {
            alloc.set(owner - 1, j, 1.0);
        }
    }
    alloc
}

/// Allocation maximizing the virtual surplus at one joint type point.
pub fn optimize_allocation_at(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    joint_t: &[f64],
) -> Result<Allocation> {
    let w = virtual_rows(profiles, joint_t);
    Ok(best_vertex(catalog, profiles, joint_t, &w))
}

/// v_ij at every grid node, NaN where the family is singular. NaN entries
/// are only an error if a nonzero allocation forces their use.
fn node_values(profile: &UserProfile, grid: &TypeGrid) -> Vec<Vec<f64>> {
    grid.nodes()
        .iter()
        .map(|&t| {
            profile
                .valuations
                .iter()
                .map(|v| v.value(t).unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}

fn guard_nan(x: f64, user: usize, t: f64) -> Result<f64> {
    if x.is_nan() {
        Err(Error::ValuationDomain {
            t,
            reason: format!("user {user} holds a resource where its valuation is singular"),
        })
    } else {
        Ok(x)
    }
}

/// Compute the optimal mechanism: the vertex maximizer at every joint grid
/// point, and the envelope cost at every own-type node.
pub fn solve_mechanism(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    resolution: usize,
) -> Result<SolveOutput> {
    let n = profiles.len();
    let m = catalog.num_resources();
    for p in profiles {
        p.validate(catalog)?;
    }
    let grids: Vec<TypeGrid> = profiles
        .iter()
        .map(|p| TypeGrid::build(&p.type_dist, resolution))
        .collect::<Result<_>>()?;
    let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();

    // virtual valuations per (user, own node, resource)
    let w_nodes: Vec<Vec<Vec<f64>>> = profiles
        .iter()
        .zip(&grids)
        .map(|(p, g)| {
            g.nodes()
                .iter()
                .map(|&t| {
                    p.valuations
                        .iter()
                        .map(|v| virtual_valuation_extended(v, &p.type_dist, t))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut mech = MechanismTable::zero(grids, m);
    let total = crate::model::joint_len(&shape);
    let mut idx = vec![0usize; n];
    let mut joint_t = vec![0.0f64; n];
    let mut w_rows: Vec<Vec<f64>> = vec![vec![0.0; m]; n];
    for flat in 0..total {
        unflat_into(flat, &shape, &mut idx);
        for i in 0..n {
            joint_t[i] = mech.grid(i).node(idx[i]);
            w_rows[i].copy_from_slice(&w_nodes[i][idx[i]]);
        }
        let alloc = best_vertex(catalog, profiles, &joint_t, &w_rows);
        mech.set_allocation_flat(flat, alloc);
    }

    let mut warnings = Vec::new();
    for (i, profile) in profiles.iter().enumerate() {
        let vals = node_values(profile, mech.grid(i));
        let r = mech.grid(i).len();
        let mut cumulative = 0.0f64;
        let mut costs = vec![0.0f64; r];
        for a in 0..r {
            let t = mech.grid(i).node(a);
            // marginal-utility increment over (x_{a−1}, x_a]
            if a > 0 {
                let mut increment = 0.0;
                let mut inc_err = None;
                for_each_opponent_point(&mech, i, a, |flat, w| {
                    if inc_err.is_some() {
                        return;
                    }
                    let row = mech.allocation_at_flat(flat).row(i);
                    let mut dv = 0.0;
                    for (j, &p) in row.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        match (
                            guard_nan(vals[a][j], i, t),
                            guard_nan(vals[a - 1][j], i, mech.grid(i).node(a - 1)),
                        ) {
                            (Ok(hi), Ok(lo)) => dv += p * (hi - lo),
                            (Err(e), _) | (_, Err(e)) => {
                                inc_err = Some(e);
                                return;
                            }
                        }
                    }
                    increment += w * dv;
                });
                if let Some(e) = inc_err {
                    return Err(e);
                }
                if increment < -1e-9 {
                    warnings.push(format!(
                        "user {i}: marginal utility decreases at t={t} (allocation value \
                         non-monotone in own type; incentive checks may fail)"
                    ));
                }
                cumulative += increment;
            }
            // gross expected value of the allocation at a truthful report
            let mut gross = 0.0;
            let mut gross_err = None;
            for_each_opponent_point(&mech, i, a, |flat, w| {
                if gross_err.is_some() {
                    return;
                }
                let row = mech.allocation_at_flat(flat).row(i);
                let mut g = 0.0;
                for (j, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    match guard_nan(vals[a][j], i, t) {
                        Ok(v) => g += p * v,
                        Err(e) => {
                            gross_err = Some(e);
                            return;
                        }
                    }
                }
                g += premium_discount_term(catalog, profile, row, t);
                gross += w * g;
            });
            if let Some(e) = gross_err {
                return Err(e);
            }
            costs[a] = gross - cumulative;
        }
        for (a, c) in costs.into_iter().enumerate() {
            mech.set_cost(i, a, c);
        }
    }

    Ok(SolveOutput {
        mechanism: mech,
        warnings,
    })
}

/// Seller revenue: Σ_i E_{t_i}[c_i(t_i)].
pub fn expected_revenue(mech: &MechanismTable) -> f64 {
    (0..mech.num_users())
        .map(|i| {
            mech.grid(i)
                .prob_weights()
                .iter()
                .zip(mech.costs(i))
                .map(|(w, c)| w * c)
                .sum::<f64>()
        })
        .sum()
}

/// Hazard-weighted marginal-value diagnostic for a user's utility after
/// allocation: E_{t_{-i}}{Σ_j ((1−F)/f)·v′_ij(t_i)·p_ij}. This is the
/// closed-form transform of the envelope integral; the envelope form is the
/// ground truth the verification module checks.
pub fn optimal_user_utility(
    _catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &MechanismTable,
    user: usize,
    t: f64,
) -> Result<f64> {
    let profile = &profiles[user];
    if profile.type_dist.is_point_mass() {
        return Err(Error::HazardUndefined {
            t,
            reason: "point-mass distribution".into(),
        });
    }
    let node = mech
        .grid(user)
        .node_index(t)
        .ok_or(Error::OffGrid { user, t })?;
    let survival = 1.0 - profile.type_dist.cdf(t);
    if survival <= 0.0 {
        return Ok(0.0);
    }
    let f = profile.type_dist.pdf(t)?;
    if f < crate::valuation::MIN_DENSITY {
        return Err(Error::HazardUndefined {
            t,
            reason: format!("density {f} vanishes"),
        });
    }
    let hazard = survival / f;
    let mut expectation = 0.0;
    let mut err = None;
    for_each_opponent_point(mech, user, node, |flat, w| {
        if err.is_some() {
            return;
        }
        let row = mech.allocation_at_flat(flat).row(user);
        let mut s = 0.0;
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            match profile.valuations[j].derivative(t) {
                Ok(d) => s += p * d,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            }
        }
        expectation += w * hazard * s;
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(expectation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_catalog, Factor, TypeDistribution, ValuationFunction as V};
    use crate::utility::total_utility_at_node;

    fn profile(dist: TypeDistribution, vals: Vec<V>, h: f64, l: f64) -> UserProfile {
        UserProfile {
            type_dist: dist,
            valuations: vals,
            premium: Factor::Constant(h),
            discount: Factor::Constant(l),
        }
    }

    #[test]
    fn virtual_surplus_hand_values() {
        let catalog = build_catalog(&[1]).unwrap();
        let p = profile(
            TypeDistribution::Uniform01,
            vec![V::Linear { slope: 10.0 }],
            0.0,
            0.0,
        );
        let zero = Allocation::zeros(1, 1);
        assert_eq!(
            virtual_surplus_at(&catalog, std::slice::from_ref(&p), &[0.8], &zero).unwrap(),
            0.0
        );
        let full = Allocation::from_rows(&[&[1.0]]);
        let s = virtual_surplus_at(&catalog, &[p], &[0.8], &full).unwrap();
        assert!((s - 6.0).abs() < 1e-12); // 8 − 0.2·10

        let catalog = build_catalog(&[2, 2]).unwrap();
        let p = profile(
            TypeDistribution::Uniform01,
            vec![V::Linear { slope: 10.0 }; 4],
            4.0,
            1.5,
        );
        let full = Allocation::from_rows(&[&[1.0, 1.0, 1.0, 1.0]]);
        let s = virtual_surplus_at(&catalog, &[p], &[1.0], &full).unwrap();
        assert!((s - 50.0).abs() < 1e-12); // 4·10 + (4·4 − 1.5·4)
    }

    #[test]
    fn single_resource_goes_to_the_positive_virtual_value() {
        let catalog = build_catalog(&[1]).unwrap();
        let mk = || {
            profile(
                TypeDistribution::Uniform01,
                vec![V::Linear { slope: 10.0 }],
                0.0,
                0.0,
            )
        };
        let profiles = [mk(), mk()];
        // virtual values 6 vs −4
        let alloc = optimize_allocation_at(&catalog, &profiles, &[0.8, 0.3]).unwrap();
        assert_eq!(alloc.get(0, 0), 1.0);
        assert_eq!(alloc.get(1, 0), 0.0);
        // both negative: leave unassigned
        let alloc = optimize_allocation_at(&catalog, &profiles, &[0.1, 0.2]).unwrap();
        assert_eq!(alloc.get(0, 0) + alloc.get(1, 0), 0.0);
    }

    #[test]
    fn posted_price_closed_form() {
        // single user, single resource, Linear(10), Uniform01: the classic
        // posted price at 5 with sale probability 1/2
        let catalog = build_catalog(&[1]).unwrap();
        let p = profile(
            TypeDistribution::Uniform01,
            vec![V::Linear { slope: 10.0 }],
            0.0,
            0.0,
        );
        let out = solve_mechanism(&catalog, std::slice::from_ref(&p), 41).unwrap();
        let mech = &out.mechanism;
        for a in 0..41 {
            let t = mech.grid(0).node(a);
            let won = mech.allocation_at_flat(a).get(0, 0);
            if t > 0.5 + 1e-12 {
                assert_eq!(won, 1.0, "t={t}");
                assert!((mech.cost(0, a) - 5.0).abs() < 1e-12, "t={t}");
            } else {
                assert_eq!(won, 0.0, "t={t}");
                assert_eq!(mech.cost(0, a), 0.0, "t={t}");
            }
        }
        assert!((expected_revenue(mech) - 2.5).abs() < 1e-12);
        // u(0.8) = 8 − 5
        let u = total_utility_at_node(&catalog, &[p], mech, 0, 32).unwrap();
        assert!((u - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bottom_type_utility_is_zero() {
        let catalog = build_catalog(&[2, 2]).unwrap();
        let mk = || {
            profile(
                TypeDistribution::Uniform01,
                vec![
                    V::Linear { slope: 10.0 },
                    V::Linear { slope: 20.0 },
                    V::LinLog { theta: 1.25e6 },
                    V::LinLog { theta: 3.75e6 },
                ],
                4.0,
                1.5,
            )
        };
        let profiles = [mk(), mk()];
        let out = solve_mechanism(&catalog, &profiles, 21).unwrap();
        for i in 0..2 {
            let u = total_utility_at_node(&catalog, &profiles, &out.mechanism, i, 0).unwrap();
            assert!(u.abs() < 1e-9, "user {i}: u(t_low) = {u}");
        }
    }

    #[test]
    fn zero_mechanism_revenue_is_zero() {
        let grids = vec![
            TypeGrid::build(&TypeDistribution::Uniform01, 11).unwrap(),
            TypeGrid::build(&TypeDistribution::Uniform01, 11).unwrap(),
        ];
        let mech = MechanismTable::zero(grids, 4);
        assert_eq!(expected_revenue(&mech), 0.0);
    }

    #[test]
    fn hazard_weighted_utility_diagnostic() {
        let catalog = build_catalog(&[1]).unwrap();
        let p = profile(
            TypeDistribution::Uniform01,
            vec![V::Linear { slope: 10.0 }],
            0.0,
            0.0,
        );
        let out = solve_mechanism(&catalog, std::slice::from_ref(&p), 41).unwrap();
        // t = 0.8: (1 − 0.8)·10·1
        let d = optimal_user_utility(&catalog, std::slice::from_ref(&p), &out.mechanism, 0, 0.8).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        // top type: survival is zero
        let d = optimal_user_utility(&catalog, std::slice::from_ref(&p), &out.mechanism, 0, 1.0).unwrap();
        assert_eq!(d, 0.0);
        // unallocated region
        let d = optimal_user_utility(&catalog, &[p], &out.mechanism, 0, 0.25).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn point_mass_user_competes_with_raw_valuation() {
        let catalog = build_catalog(&[1]).unwrap();
        let sweeper = profile(
            TypeDistribution::Uniform01,
            vec![V::Linear { slope: 10.0 }],
            0.0,
            0.0,
        );
        let fixed = profile(
            TypeDistribution::PointMass { value: 0.6 },
            vec![V::Linear { slope: 10.0 }],
            0.0,
            0.0,
        );
        let profiles = [sweeper, fixed];
        // raw valuation 6 beats virtual value 2·0.7·10 − 10 = 4
        let alloc = optimize_allocation_at(&catalog, &profiles, &[0.7, 0.6]).unwrap();
        assert_eq!(alloc.get(1, 0), 1.0);
        // virtual value 8 beats 6
        let alloc = optimize_allocation_at(&catalog, &profiles, &[0.9, 0.6]).unwrap();
        assert_eq!(alloc.get(0, 0), 1.0);
    }
}
