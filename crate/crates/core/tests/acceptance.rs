//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure. Tolerances are pinned in the constants below.

use std::time::Instant;

use auction_core::model::{
    build_catalog, unflat_into, Factor, ResourceCatalog, TypeDistribution,
    UserProfile, ValuationFunction,
};
use auction_core::scenario::{preset, run_solve, run_sweep};
use auction_core::solver::{
    expected_revenue, optimize_allocation_at, solve_mechanism, virtual_surplus_at,
};
use auction_core::utility::total_utility_at_node;
use auction_core::valuation::virtual_valuation_extended;
use auction_core::verification::{
    check_envelope, check_ic, check_ir, oracle_allocation_search,
};

const POSTED_PRICE_TOL: f64 = 1e-3;
const IC_IR_TOL: f64 = 1e-6;
const DECOMPOSITION_REL_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-9;
const ENVELOPE_MIN_ORDER: f64 = 1.8;
const TURNING_POINT: f64 = 0.5;

type Criterion = (&'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 posted-price closed form", posted_price),
        ("2 example-1 reduction", example1_reduction),
        ("3 asymmetric turning point", turning_point),
        ("4 factor ordering", factor_ordering),
        ("5 IC/IR certification", certification),
        ("6 envelope convergence", envelope_convergence),
        ("7 vertex-optimality oracle", vertex_oracle),
        ("8 revenue decomposition", revenue_decomposition),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {name}: FAIL ({detail})");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}

fn single_posted_price_setup() -> (ResourceCatalog, Vec<UserProfile>) {
    let catalog = build_catalog(&[1]).unwrap();
    let profiles = vec![UserProfile {
        type_dist: TypeDistribution::Uniform01,
        valuations: vec![ValuationFunction::Linear { slope: 10.0 }],
        premium: Factor::Constant(0.0),
        discount: Factor::Constant(0.0),
    }];
    (catalog, profiles)
}

/// Single user, Linear(10), Uniform01: sell iff t > 1/2 at posted price 5,
/// expected revenue 5/2.
fn posted_price() -> Result<String, String> {
    let start = Instant::now();
    let (catalog, profiles) = single_posted_price_setup();
    let out = solve_mechanism(&catalog, &profiles, 201).map_err(|e| e.to_string())?;
    let mech = &out.mechanism;
    for a in 0..201 {
        let t = mech.grid(0).node(a);
        let won = mech.allocation_at_flat(a).get(0, 0);
        let cost = mech.cost(0, a);
        if t > 0.5 + 1e-12 {
            if won != 1.0 {
                return Err(format!("no sale at t = {t}"));
            }
            if (cost - 5.0).abs() > POSTED_PRICE_TOL {
                return Err(format!("cost {cost} at t = {t}, expected 5.0"));
            }
        } else if won != 0.0 {
            return Err(format!("sale below the reserve at t = {t}"));
        }
    }
    let revenue = expected_revenue(mech);
    if (revenue - 2.5).abs() > POSTED_PRICE_TOL {
        return Err(format!("revenue {revenue}, expected 2.5"));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 1.0 {
        return Err(format!("took {elapsed:.2?}, budget 1 s"));
    }
    Ok(format!(
        "cost 5.0 and revenue {revenue} within {POSTED_PRICE_TOL} at R=201, {elapsed:.2?}"
    ))
}

/// With h = l = 0 the solved allocation equals, exactly, the independent
/// per-resource argmax of nonnegative virtual valuations.
fn example1_reduction() -> Result<String, String> {
    let config = preset("example1-basic").unwrap();
    let (catalog, profiles) = config.build().map_err(|e| e.to_string())?;
    let out =
        solve_mechanism(&catalog, &profiles, config.resolution).map_err(|e| e.to_string())?;
    let mech = out.mechanism;
    let shape = mech.shape();
    let n = profiles.len();
    let m = catalog.num_resources();
    let mut idx = vec![0usize; n];
    for flat in 0..mech.allocations().len() {
        unflat_into(flat, &shape, &mut idx);
        let w: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = mech.grid(i).node(idx[i]);
                (0..m)
                    .map(|j| {
                        virtual_valuation_extended(
                            &profiles[i].valuations[j],
                            &profiles[i].type_dist,
                            t,
                        )
                    })
                    .collect()
            })
            .collect();
        let alloc = mech.allocation_at_flat(flat);
        for j in 0..m {
            // independent argmax with the solver's tie rules: strictly
            // positive to win, first (lowest-index) maximizer kept
            let mut winner = None;
            let mut best = 0.0f64;
            for (i, row) in w.iter().enumerate() {
                if row[j] > best {
                    best = row[j];
                    winner = Some(i);
                }
            }
            for i in 0..n {
                let expect = if winner == Some(i) { 1.0 } else { 0.0 };
                if alloc.get(i, j) != expect {
                    return Err(format!(
                        "joint node {idx:?}, resource {}: p[{}] = {}, argmax says {expect}",
                        j + 1,
                        i + 1,
                        alloc.get(i, j)
                    ));
                }
            }
        }
    }
    Ok(format!(
        "allocation equals the per-resource argmax at all {} joint nodes",
        mech.allocations().len()
    ))
}

/// example3-asymmetric sweep at t_2 = 0.6: every resource's winner switches
/// from user 2 to user 1 at t_1 = 0.5 ± one grid step, and user 2's utility
/// is flat once they hold nothing.
fn turning_point() -> Result<String, String> {
    let mut config = preset("example3-asymmetric").unwrap();
    config.resolution = 101;
    let arts = run_sweep(&config, None, false).map_err(|e| e.to_string())?;
    let rows = &arts[0].rows;
    let step = 1.0 / 100.0;
    let m = rows[0].winners.len();
    let mut switches = Vec::new();
    for j in 0..m {
        let mut switch_at = None;
        for pair in rows.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            match (prev.winners[j], next.winners[j]) {
                (2, 1) => {
                    if switch_at.is_some() {
                        return Err(format!("resource {} switches twice", j + 1));
                    }
                    switch_at = Some(next.swept_type);
                }
                (1, 2) => {
                    return Err(format!(
                        "resource {} flips back to user 2 at t_1 = {}",
                        j + 1,
                        next.swept_type
                    ));
                }
                _ => {}
            }
        }
        let at = switch_at.ok_or(format!("resource {} never switches winner", j + 1))?;
        if (at - TURNING_POINT).abs() > step + 1e-9 {
            return Err(format!(
                "resource {} switches at t_1 = {at}, expected {TURNING_POINT} ± {step}",
                j + 1
            ));
        }
        switches.push(at);
    }
    // user 2's realized utility is constant wherever they hold nothing
    let losing: Vec<&auction_core::scenario::SweepRow> = rows
        .iter()
        .filter(|r| r.winners.iter().all(|&w| w != 2))
        .collect();
    if losing.len() < 2 {
        return Err("no losing-side region for user 2".into());
    }
    let u2 = losing[0].utilities[1];
    for row in &losing {
        if (row.utilities[1] - u2).abs() > 1e-12 {
            return Err(format!(
                "user 2's utility moves on the losing side: {} vs {u2}",
                row.utilities[1]
            ));
        }
    }
    Ok(format!(
        "winner switches at t_1 = {switches:?}, user 2 flat over {} losing rows",
        losing.len()
    ))
}

/// factors-study: revenue(h=4,l=0) dominates both other cases, and the
/// premium-only utility curve pointwise dominates the no-factor curve.
fn factor_ordering() -> Result<String, String> {
    let config = preset("factors-study").unwrap();
    let arts = run_solve(&config, None, IC_IR_TOL).map_err(|e| e.to_string())?;
    let revenue = |label: &str| {
        arts.iter()
            .find(|a| a.label == label)
            .map(|a| a.revenue)
            .ok_or(format!("missing case {label}"))
    };
    let both = revenue("both-factors")?;
    let premium_only = revenue("premium-only")?;
    let none = revenue("no-factors")?;
    if premium_only < both - 1e-12 {
        return Err(format!("revenue({premium_only}) < revenue with discount ({both})"));
    }
    if premium_only < none - 1e-12 {
        return Err(format!("revenue({premium_only}) < factor-free revenue ({none})"));
    }
    let sweeps = run_sweep(&config, None, false).map_err(|e| e.to_string())?;
    let curve = |label: &str| {
        sweeps
            .iter()
            .find(|a| a.label == label)
            .map(|a| a.rows.iter().map(|r| r.utilities[0]).collect::<Vec<f64>>())
            .ok_or(format!("missing sweep case {label}"))
    };
    let premium_curve = curve("premium-only")?;
    let none_curve = curve("no-factors")?;
    for (a, (up, un)) in premium_curve.iter().zip(&none_curve).enumerate() {
        if up < &(un - 1e-9) {
            return Err(format!(
                "premium-only utility {up} < no-factor utility {un} at sweep node {a}"
            ));
        }
    }
    Ok(format!(
        "revenues: premium-only {premium_only:.4} >= both {both:.4}, none {none:.4}; \
         utility curve dominates at all {} nodes",
        premium_curve.len()
    ))
}

/// Every built-in scenario passes exhaustive IR and IC at R=51 within 30 s;
/// the constructed full-extraction violator fails IC with positive gain.
fn certification() -> Result<String, String> {
    let start = Instant::now();
    let mut checked = 0;
    for name in auction_core::scenario::PRESET_NAMES {
        let config = preset(name).unwrap();
        for (label, case) in config.cases() {
            let (catalog, profiles) = case.build().map_err(|e| e.to_string())?;
            let out = solve_mechanism(&catalog, &profiles, 51).map_err(|e| e.to_string())?;
            let tag = if label.is_empty() {
                name.to_string()
            } else {
                format!("{name}/{label}")
            };
            let ir = check_ir(&catalog, &profiles, &out.mechanism, IC_IR_TOL);
            if !ir.pass {
                return Err(format!("{tag}: IR worst {} at {}", ir.worst, ir.location));
            }
            let ic = check_ic(&catalog, &profiles, &out.mechanism, IC_IR_TOL);
            if !ic.pass {
                return Err(format!("{tag}: IC gain {} at {}", ic.worst, ic.location));
            }
            checked += 1;
        }
    }
    // full extraction: add each user's utility to their cost schedule;
    // understating the type must then show a strictly positive gain
    let config = preset("example1-basic").unwrap();
    let (catalog, profiles) = config.build().map_err(|e| e.to_string())?;
    let mut mech = solve_mechanism(&catalog, &profiles, 21)
        .map_err(|e| e.to_string())?
        .mechanism;
    for i in 0..profiles.len() {
        for a in 0..mech.grid(i).len() {
            let u = total_utility_at_node(&catalog, &profiles, &mech, i, a)
                .map_err(|e| e.to_string())?;
            let c = mech.cost(i, a);
            mech.set_cost(i, a, c + u);
        }
    }
    let ic = check_ic(&catalog, &profiles, &mech, IC_IR_TOL);
    if ic.pass || ic.worst <= 0.0 {
        return Err(format!(
            "full-extraction violator was not caught (gain {})",
            ic.worst
        ));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 30.0 {
        return Err(format!("took {elapsed:.2?}, budget 30 s"));
    }
    Ok(format!(
        "{checked} scenario cases pass IR/IC at R=51 in {elapsed:.2?}; violator gain {:+.3e}",
        ic.worst
    ))
}

/// Envelope residual on example1-basic shrinks with empirical order >= 1.8
/// across R = 25, 101, 201.
fn envelope_convergence() -> Result<String, String> {
    let config = preset("example1-basic").unwrap();
    let (catalog, profiles) = config.build().map_err(|e| e.to_string())?;
    let mut residuals = Vec::new();
    let resolutions = [25usize, 101, 201];
    for &r in &resolutions {
        let out = solve_mechanism(&catalog, &profiles, r).map_err(|e| e.to_string())?;
        let rep = check_envelope(&catalog, &profiles, &out.mechanism);
        if !rep.worst.is_finite() || rep.worst <= 0.0 {
            return Err(format!("degenerate residual {} at R={r}", rep.worst));
        }
        residuals.push(rep.worst);
    }
    if !(residuals[0] > residuals[1] && residuals[1] > residuals[2]) {
        return Err(format!("residuals not decreasing: {residuals:?}"));
    }
    let h = |r: usize| 1.0 / (r - 1) as f64;
    let order =
        (residuals[0] / residuals[2]).ln() / (h(resolutions[0]) / h(resolutions[2])).ln();
    if order < ENVELOPE_MIN_ORDER {
        return Err(format!(
            "empirical order {order:.2} < {ENVELOPE_MIN_ORDER} (residuals {residuals:?})"
        ));
    }
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.3e}")).collect();
    Ok(format!(
        "residuals [{}] give empirical order {order:.2}",
        shown.join(", ")
    ))
}

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state << 13;
    *state ^= *state >> 7;
    *state ^= *state << 17;
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

/// 200 random two-user instances: the vertex optimizer's objective matches
/// the steps=10 fractional brute force within 1e-9.
fn vertex_oracle() -> Result<String, String> {
    let mut state = 0x5eed_cafe_f00d_2026u64;
    let mut worst = 0.0f64;
    for case in 0..200 {
        let m = 1 + (xorshift(&mut state) * 4.0) as usize; // 1..=4 resources
        let mut groups = vec![1usize];
        for _ in 1..m {
            if xorshift(&mut state) < 0.5 {
                *groups.last_mut().unwrap() += 1;
            } else {
                groups.push(1);
            }
        }
        let catalog = build_catalog(&groups).unwrap();
        let mut user = || {
            let valuations = (0..m)
                .map(|_| {
                    if xorshift(&mut state) < 0.5 {
                        ValuationFunction::Linear {
                            slope: 1.0 + 19.0 * xorshift(&mut state),
                        }
                    } else {
                        ValuationFunction::LogInverse {
                            theta: 10.0_f64.powf(1.0 + 5.0 * xorshift(&mut state)),
                        }
                    }
                })
                .collect();
            UserProfile {
                type_dist: TypeDistribution::Uniform01,
                valuations,
                premium: Factor::Constant(4.0 * xorshift(&mut state)),
                discount: Factor::Constant(2.0 * xorshift(&mut state)),
            }
        };
        let profiles = vec![user(), user()];
        let joint_t = [
            0.1 + 0.85 * xorshift(&mut state),
            0.1 + 0.85 * xorshift(&mut state),
        ];
        let vertex = optimize_allocation_at(&catalog, &profiles, &joint_t)
            .map_err(|e| format!("case {case}: {e}"))?;
        let oracle = oracle_allocation_search(&catalog, &profiles, &joint_t, 10, 1 << 40)
            .map_err(|e| format!("case {case}: {e}"))?;
        let v = virtual_surplus_at(&catalog, &profiles, &joint_t, &vertex)
            .map_err(|e| format!("case {case}: {e}"))?;
        let o = virtual_surplus_at(&catalog, &profiles, &joint_t, &oracle)
            .map_err(|e| format!("case {case}: {e}"))?;
        let gap = (o - v).abs();
        worst = worst.max(gap);
        if gap > ORACLE_TOL {
            return Err(format!(
                "case {case} (groups {groups:?}, t {joint_t:?}): vertex {v} vs oracle {o}"
            ));
        }
    }
    Ok(format!("200 instances, worst objective gap {worst:.3e}"))
}

/// Direct cost-sum revenue equals the virtual-surplus decomposition within
/// 1e-6 relative at R=101 on every preset case.
fn revenue_decomposition() -> Result<String, String> {
    let mut worst = 0.0f64;
    for name in auction_core::scenario::PRESET_NAMES {
        let config = preset(name).unwrap();
        for (label, case) in config.cases() {
            let (catalog, profiles) = case.build().map_err(|e| e.to_string())?;
            let out = solve_mechanism(&catalog, &profiles, 101).map_err(|e| e.to_string())?;
            let rep = auction_core::verification::check_revenue_decomposition(
                &catalog,
                &profiles,
                &out.mechanism,
                DECOMPOSITION_REL_TOL,
            );
            if !rep.pass {
                return Err(format!("{name}/{label}: {}", rep.location));
            }
            worst = worst.max(rep.worst);
        }
    }
    Ok(format!("all preset cases at R=101, worst residual {worst:.3e}"))
}
