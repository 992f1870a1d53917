//! Scenario configuration: TOML schema, built-in presets, and the batch
//! solve/sweep operations behind the CLI.
//!
//! Configs are plain data and round-trip through TOML exactly. All artifact
//! content is built as strings with a fixed ordering, so reruns are
//! byte-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_catalog, flat_of, Factor, ResourceCatalog, TypeDistribution, UserProfile,
    ValuationFunction,
};
use crate::solver::{expected_revenue, solve_mechanism, SolveOutput};
use crate::utility::total_utility_at_node;
use crate::verification::{
    check_envelope, check_ic, check_ir, check_monotonicity, check_revenue_decomposition,
    CheckReport,
};

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionConfig {
    Uniform,
    Power { exponent: f64 },
    PointMass { value: f64 },
}

impl DistributionConfig {
    fn build(&self) -> TypeDistribution {
        match self {
            Self::Uniform => TypeDistribution::Uniform01,
            Self::Power { exponent } => TypeDistribution::PowerCdf {
                exponent: *exponent,
            },
            Self::PointMass { value } => TypeDistribution::PointMass { value: *value },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValuationConfig {
    Linear { slope: f64 },
    LogInverse { theta: f64 },
    SqrtLinear { slope: f64 },
    SqrtLog { theta: f64 },
    LinLog { theta: f64 },
}

impl ValuationConfig {
    fn build(&self) -> ValuationFunction {
        match *self {
            Self::Linear { slope } => ValuationFunction::Linear { slope },
            Self::LogInverse { theta } => ValuationFunction::LogInverse { theta },
            Self::SqrtLinear { slope } => ValuationFunction::SqrtLinear { slope },
            Self::SqrtLog { theta } => ValuationFunction::SqrtLog { theta },
            Self::LinLog { theta } => ValuationFunction::LinLog { theta },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub distribution: DistributionConfig,
    pub valuations: Vec<ValuationConfig>,
    pub premium: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedOpponent {
    pub user: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// 0-based index of the swept user.
    pub user: usize,
    /// Point values pinning every other user.
    pub fixed: Vec<FixedOpponent>,
    /// Optional [lo, hi] restriction of the swept range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// One premium/discount setting applied to all users, for factor studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorCase {
    pub label: String,
    pub premium: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Substitutable-group sizes; flat resource indices run group by group.
    pub groups: Vec<usize>,
    pub resolution: usize,
    pub users: Vec<UserConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// When nonempty, solve/sweep run once per case with every user's
    /// premium/discount overridden.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factor_cases: Vec<FactorCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::ScenarioInvalid(msg));
        if self.groups.is_empty() || self.groups.contains(&0) {
            return invalid(format!("groups {:?} must be nonempty positive sizes", self.groups));
        }
        if self.users.is_empty() {
            return invalid("no users".into());
        }
        let m: usize = self.groups.iter().sum();
        let degenerate = self
            .users
            .iter()
            .all(|u| matches!(u.distribution, DistributionConfig::PointMass { .. }));
        if self.resolution < 2 && !degenerate {
            return invalid(format!("resolution {} < 2", self.resolution));
        }
        for (i, user) in self.users.iter().enumerate() {
            if user.valuations.len() != m {
                return invalid(format!(
                    "user {} has {} valuations for {} resources (resource {} onward missing)",
                    i + 1,
                    user.valuations.len(),
                    m,
                    user.valuations.len().min(m) + 1
                ));
            }
            for (j, v) in user.valuations.iter().enumerate() {
                let param = match *v {
                    ValuationConfig::Linear { slope } | ValuationConfig::SqrtLinear { slope } => {
                        slope
                    }
                    ValuationConfig::LogInverse { theta }
                    | ValuationConfig::SqrtLog { theta }
                    | ValuationConfig::LinLog { theta } => theta,
                };
                if !param.is_finite() || param <= 0.0 {
                    return invalid(format!(
                        "user {}, resource {}: parameter {param} must be positive and finite",
                        i + 1,
                        j + 1
                    ));
                }
            }
            match user.distribution {
                DistributionConfig::Power { exponent } if exponent <= 0.0 => {
                    return invalid(format!("user {}: power exponent {exponent} <= 0", i + 1));
                }
                DistributionConfig::PointMass { value } if !value.is_finite() => {
                    return invalid(format!("user {}: point mass at {value}", i + 1));
                }
                _ => {}
            }
            for (name, x) in [("premium", user.premium), ("discount", user.discount)] {
                if !x.is_finite() || x < 0.0 {
                    return invalid(format!("user {}: {name} {x} must be >= 0", i + 1));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.user >= self.users.len() {
                return invalid(format!("sweep user {} out of range", sweep.user + 1));
            }
            let mut pinned = vec![false; self.users.len()];
            pinned[sweep.user] = true;
            for f in &sweep.fixed {
                if f.user >= self.users.len() || f.user == sweep.user {
                    return invalid(format!("sweep fixes invalid user {}", f.user + 1));
                }
                if pinned[f.user] {
                    return invalid(format!("sweep fixes user {} twice", f.user + 1));
                }
                pinned[f.user] = true;
            }
            if let Some(i) = pinned.iter().position(|&p| !p) {
                return invalid(format!("sweep leaves user {} unpinned", i + 1));
            }
            if let Some([lo, hi]) = sweep.range {
                if !(lo < hi) {
                    return invalid(format!("sweep range [{lo}, {hi}] is empty"));
                }
            }
        }
        for case in &self.factor_cases {
            for (name, x) in [("premium", case.premium), ("discount", case.discount)] {
                if !x.is_finite() || x < 0.0 {
                    return invalid(format!(
                        "factor case '{}': {name} {x} must be >= 0",
                        case.label
                    ));
                }
            }
        }
        Ok(())
    }

    /// Catalog and profiles for this config as-is (factor cases ignored).
    pub fn build(&self) -> Result<(ResourceCatalog, Vec<UserProfile>)> {
        self.validate()?;
        let catalog = build_catalog(&self.groups)?;
        let profiles = self
            .users
            .iter()
            .map(|u| UserProfile {
                type_dist: u.distribution.build(),
                valuations: u.valuations.iter().map(ValuationConfig::build).collect(),
                premium: Factor::Constant(u.premium),
                discount: Factor::Constant(u.discount),
            })
            .collect();
        Ok((catalog, profiles))
    }

    /// The concrete runs this config stands for: itself, or one run per
    /// factor case with premium/discount overridden for every user.
    pub fn cases(&self) -> Vec<(String, ScenarioConfig)> {
        if self.factor_cases.is_empty() {
            return vec![(String::new(), self.clone())];
        }
        self.factor_cases
            .iter()
            .map(|case| {
                let mut c = self.clone();
                c.factor_cases = Vec::new();
                for u in &mut c.users {
                    u.premium = case.premium;
                    u.discount = case.discount;
                }
                (case.label.clone(), c)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

pub const PRESET_NAMES: [&str; 4] = [
    "example1-basic",
    "example2-symmetric",
    "example3-asymmetric",
    "factors-study",
];

fn standard_valuations() -> Vec<ValuationConfig> {
    vec![
        ValuationConfig::Linear { slope: 10.0 },
        ValuationConfig::Linear { slope: 20.0 },
        ValuationConfig::LinLog { theta: 1.25e6 },
        ValuationConfig::LinLog { theta: 3.75e6 },
    ]
}

fn uniform_user(premium: f64, discount: f64) -> UserConfig {
    UserConfig {
        distribution: DistributionConfig::Uniform,
        valuations: standard_valuations(),
        premium,
        discount,
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let config = match name {
        // two symmetric uniform users, no premium/discount: reduces to
        // independent single-commodity auctions
        "example1-basic" => ScenarioConfig {
            name: name.into(),
            groups: vec![2, 2],
            resolution: 51,
            users: vec![uniform_user(0.0, 0.0), uniform_user(0.0, 0.0)],
            sweep: None,
            factor_cases: Vec::new(),
            out_dir: None,
        },
        // same market with premium 4 and discount 1.5 on both users
        "example2-symmetric" => ScenarioConfig {
            name: name.into(),
            groups: vec![2, 2],
            resolution: 51,
            users: vec![uniform_user(4.0, 1.5), uniform_user(4.0, 1.5)],
            sweep: None,
            factor_cases: Vec::new(),
            out_dir: None,
        },
        // user 1 draws from F(t) = t² with square-root valuations, user 2 is
        // the uniform/linear baseline; user 2 is pinned at t = 0.6 in sweeps
        "example3-asymmetric" => ScenarioConfig {
            name: name.into(),
            groups: vec![2, 2],
            resolution: 101,
            users: vec![
                UserConfig {
                    distribution: DistributionConfig::Power { exponent: 2.0 },
                    valuations: vec![
                        ValuationConfig::SqrtLinear { slope: 10.0 },
                        ValuationConfig::SqrtLinear { slope: 20.0 },
                        ValuationConfig::SqrtLog { theta: 1.25e6 },
                        ValuationConfig::SqrtLog { theta: 3.75e6 },
                    ],
                    premium: 0.0,
                    discount: 0.0,
                },
                uniform_user(0.0, 0.0),
            ],
            sweep: Some(SweepConfig {
                user: 0,
                fixed: vec![FixedOpponent { user: 1, t: 0.6 }],
                range: None,
            }),
            factor_cases: Vec::new(),
            out_dir: None,
        },
        // premium/discount comparison on the symmetric market
        "factors-study" => ScenarioConfig {
            name: name.into(),
            groups: vec![2, 2],
            resolution: 51,
            users: vec![uniform_user(0.0, 0.0), uniform_user(0.0, 0.0)],
            sweep: Some(SweepConfig {
                user: 0,
                fixed: vec![FixedOpponent { user: 1, t: 0.6 }],
                range: None,
            }),
            factor_cases: vec![
                FactorCase {
                    label: "both-factors".into(),
                    premium: 4.0,
                    discount: 1.5,
                },
                FactorCase {
                    label: "premium-only".into(),
                    premium: 4.0,
                    discount: 0.0,
                },
                FactorCase {
                    label: "no-factors".into(),
                    premium: 0.0,
                    discount: 0.0,
                },
            ],
            out_dir: None,
        },
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    Ok(config)
}

/// Resolve a preset name or a TOML file path.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig> {
    if PRESET_NAMES.contains(&spec) {
        return preset(spec);
    }
    if !std::path::Path::new(spec).exists() {
        return Err(Error::UnknownPreset(format!(
            "{spec} (not a preset and no such file; presets: {})",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(spec)?;
    ScenarioConfig::from_toml(&text)
}

// ---------------------------------------------------------------------------
// Solve and sweep operations
// ---------------------------------------------------------------------------

/// Results of one solve run (one factor case).
#[derive(Debug)]
pub struct SolveArtifacts {
    pub label: String,
    pub revenue: f64,
    pub reports: Vec<CheckReport>,
    pub warnings: Vec<String>,
    /// Joint-node table: type profile, allocation matrix, cost schedule.
    pub mechanism_csv: String,
    pub output: SolveOutput,
}

impl SolveArtifacts {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip formatting; deterministic across runs
    format!("{x}")
}

fn mechanism_csv(mech: &crate::model::MechanismTable) -> String {
    let n = mech.num_users();
    let m = mech.num_resources();
    let shape = mech.shape();
    let mut header = Vec::new();
    for i in 0..n {
        header.push(format!("t{}", i + 1));
    }
    for i in 0..n {
        for j in 0..m {
            header.push(format!("p{}_{}", i + 1, j + 1));
        }
    }
    for i in 0..n {
        header.push(format!("c{}", i + 1));
    }
    let mut out = header.join(",");
    out.push('\n');
    let mut idx = vec![0usize; n];
    for flat in 0..mech.allocations().len() {
        crate::model::unflat_into(flat, &shape, &mut idx);
        let mut fields = Vec::with_capacity(header.len());
        for i in 0..n {
            fields.push(fmt_f64(mech.grid(i).node(idx[i])));
        }
        let alloc = mech.allocation_at_flat(flat);
        for i in 0..n {
            for &p in alloc.row(i) {
                fields.push(fmt_f64(p));
            }
        }
        for i in 0..n {
            fields.push(fmt_f64(mech.cost(i, idx[i])));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Solve every case of a config and certify the result.
pub fn run_solve(
    config: &ScenarioConfig,
    resolution: Option<usize>,
    tolerance: f64,
) -> Result<Vec<SolveArtifacts>> {
    let resolution = resolution.unwrap_or(config.resolution);
    let mut artifacts = Vec::new();
    for (label, case) in config.cases() {
        let (catalog, profiles) = case.build()?;
        let output = solve_mechanism(&catalog, &profiles, resolution)?;
        let mech = &output.mechanism;
        let reports = vec![
            check_ir(&catalog, &profiles, mech, tolerance),
            check_ic(&catalog, &profiles, mech, tolerance),
            check_envelope(&catalog, &profiles, mech),
            check_monotonicity(&catalog, &profiles, mech, tolerance),
            check_revenue_decomposition(&catalog, &profiles, mech, tolerance),
        ];
        artifacts.push(SolveArtifacts {
            label,
            revenue: expected_revenue(mech),
            reports,
            warnings: output.warnings.clone(),
            mechanism_csv: mechanism_csv(mech),
            output,
        });
    }
    Ok(artifacts)
}

/// One row of a sweep: the swept type, each user's interim expected utility
/// at their pinned node, the cost-sum revenue across pinned nodes, and the
/// 1-based winner per resource at the pinned joint point (0 = unassigned).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub swept_type: f64,
    pub utilities: Vec<f64>,
    pub revenue: f64,
    pub winners: Vec<usize>,
}

#[derive(Debug)]
pub struct SweepArtifacts {
    pub label: String,
    pub rows: Vec<SweepRow>,
    pub csv: String,
}

fn sweep_csv(rows: &[SweepRow], n: usize, m: usize) -> String {
    let mut header = vec!["swept_type".to_string()];
    for i in 0..n {
        header.push(format!("u{}", i + 1));
    }
    header.push("revenue".into());
    for j in 0..m {
        header.push(format!("winner_r{}", j + 1));
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut fields = vec![fmt_f64(row.swept_type)];
        fields.extend(row.utilities.iter().map(|&u| fmt_f64(u)));
        fields.push(fmt_f64(row.revenue));
        fields.extend(row.winners.iter().map(|w| w.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn sweep_row(
    catalog: &ResourceCatalog,
    profiles: &[UserProfile],
    mech: &crate::model::MechanismTable,
    joint_nodes: &[usize],
    swept_user: usize,
) -> Result<SweepRow> {
    let shape = mech.shape();
    let flat = flat_of(joint_nodes, &shape);
    let alloc = mech.allocation_at_flat(flat);
    let m = mech.num_resources();
    // utilities are interim (expected over opponents' priors) — the envelope
    // quantity; winners and revenue read the pinned joint point
    let mut utilities = Vec::with_capacity(profiles.len());
    let mut revenue = 0.0;
    for (i, _) in profiles.iter().enumerate() {
        utilities.push(total_utility_at_node(catalog, profiles, mech, i, joint_nodes[i])?);
        revenue += mech.cost(i, joint_nodes[i]);
    }
    let winners = (0..m)
        .map(|j| {
            let mut winner = 0usize;
            let mut best = 0.0f64;
            for i in 0..profiles.len() {
                let p = alloc.get(i, j);
                if p > best + 1e-12 {
                    best = p;
                    winner = i + 1;
                }
            }
            winner
        })
        .collect();
    Ok(SweepRow {
        swept_type: mech.grid(swept_user).node(joint_nodes[swept_user]),
        utilities,
        revenue,
        winners,
    })
}

/// Sweep the designated user's type across its grid with opponents pinned.
///
/// The mechanism is solved once under the prior distributions; each row then
/// reads the (swept node, fixed opponents) joint point for the winner mask
/// and cost-sum revenue, and the interim expected utilities at the pinned
/// nodes. With `resolve_per_point`, the mechanism is instead re-solved at
/// every point with all types degenerate — full-information pricing, as a
/// diagnostic.
pub fn run_sweep(
    config: &ScenarioConfig,
    resolution: Option<usize>,
    resolve_per_point: bool,
) -> Result<Vec<SweepArtifacts>> {
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| Error::ScenarioInvalid("config has no sweep section".into()))?;
    let resolution = resolution.unwrap_or(config.resolution);
    let mut artifacts = Vec::new();
    for (label, case) in config.cases() {
        let (catalog, profiles) = case.build()?;
        let n = profiles.len();
        let m = catalog.num_resources();

        let prior = solve_mechanism(&catalog, &profiles, resolution)?;
        let sweep_nodes: Vec<usize> = {
            let grid = prior.mechanism.grid(sweep.user);
            (0..grid.len())
                .filter(|&a| match sweep.range {
                    Some([lo, hi]) => grid.node(a) >= lo - 1e-12 && grid.node(a) <= hi + 1e-12,
                    None => true,
                })
                .collect()
        };
        let mut fixed_nodes = vec![usize::MAX; n];
        for f in &sweep.fixed {
            fixed_nodes[f.user] = prior
                .mechanism
                .grid(f.user)
                .node_index(f.t)
                .ok_or(Error::OffGrid { user: f.user, t: f.t })?;
        }

        let mut rows = Vec::with_capacity(sweep_nodes.len());
        for &a in &sweep_nodes {
            let swept_t = prior.mechanism.grid(sweep.user).node(a);
            if resolve_per_point {
                // degenerate re-solve: every type known
                let mut point_case = case.clone();
                point_case.users[sweep.user].distribution =
                    DistributionConfig::PointMass { value: swept_t };
                for f in &sweep.fixed {
                    point_case.users[f.user].distribution =
                        DistributionConfig::PointMass { value: f.t };
                }
                let (catalog_p, profiles_p) = point_case.build()?;
                let solved = solve_mechanism(&catalog_p, &profiles_p, resolution)?;
                let joint = vec![0usize; n];
                let mut row =
                    sweep_row(&catalog_p, &profiles_p, &solved.mechanism, &joint, sweep.user)?;
                row.swept_type = swept_t;
                rows.push(row);
            } else {
                let mut joint = fixed_nodes.clone();
                joint[sweep.user] = a;
                rows.push(sweep_row(
                    &catalog,
                    &profiles,
                    &prior.mechanism,
                    &joint,
                    sweep.user,
                )?);
            }
        }
        let csv = sweep_csv(&rows, n, m);
        artifacts.push(SweepArtifacts { label, rows, csv });
    }
    Ok(artifacts)
}
