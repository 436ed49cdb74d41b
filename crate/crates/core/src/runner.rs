//! Seeded batch experiments over every check in the crate, with
//! self-describing run records that can be replayed.
//!
//! A run produces one [`ItemResult`] per checked quantity. Each item has a
//! signed `margin` that is nonnegative exactly when the item passes, so the
//! worst margin of a suite summarizes how close it came to failing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{Exponent, WirtingerPair};
use crate::identities::{
    circle_mean_decrease, composite_family_integral, harmonic_family_integral, identity_grid,
    monomial_pair_integral, phi_upper_bound_gap, random_coefficient, random_polynomial, rank_one_convexity_test,
    IdentityGrid, RankOneReport, MIDPOINT_TOLERANCE,
};
use crate::optimizer::{linspace, multistart, random_start, ray_profile, CgOptions, MinimizationResult};
use crate::radial::{
    falpha_ratio, integral_l_stretch, integral_l_stretch_quadrature, integral_phi_stretch, random_power_profile,
    random_sampled_profile, steep_runs,
};
use crate::rng::{derive_seed, item_stream};
use crate::torus::{GridFunction, TorusGrid};

/// Version of the JSON layout of [`RunRecord`].
pub const SCHEMA_VERSION: u32 = 1;

/// Relative drift tolerated by [`replay`].
pub const REPLAY_TOLERANCE: f64 = 1e-12;

pub mod tolerance {
    pub const MINIMUM: f64 = 1e-7;
    pub const RAY_MONOTONE: f64 = 1e-10;
    pub const CLOSED_FORM_ZERO: f64 = 1e-10;
    pub const QUADRATURE_ZERO: f64 = 1e-6;
    pub const LIPSCHITZ_INTEGRAL: f64 = 1e-8;
    pub const TELESCOPED: f64 = 1e-12;
    pub const PHI_ZERO: f64 = 1e-6;
    pub const SATURATION: f64 = 0.05;
    pub const MOMENT_IDENTITY: f64 = 1e-6;
    pub const BOUND_GAP: f64 = 1e-10;
    pub const RANK_ONE_CLOSED_FORM: f64 = 1e-12;
    pub const MONOMIAL: f64 = 1e-8;
    pub const HARMONIC: f64 = 1e-6;
    pub const CIRCLE_MEANS: f64 = 1e-12;
    pub const COMPOSITE: f64 = 1e-6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Minimize,
    Ray,
    Stretch,
    Identities,
    Rankone,
    Families,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::Minimize,
        Suite::Ray,
        Suite::Stretch,
        Suite::Identities,
        Suite::Rankone,
        Suite::Families,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Minimize => "minimize",
            Suite::Ray => "ray",
            Suite::Stretch => "stretch",
            Suite::Identities => "identities",
            Suite::Rankone => "rankone",
            Suite::Families => "families",
            Suite::All => "all",
        }
    }

    fn expand(self) -> Vec<Suite> {
        if self == Suite::All {
            Self::EACH.to_vec()
        } else {
            vec![self]
        }
    }

    fn uses_mesh(self) -> bool {
        matches!(self, Suite::Minimize | Suite::Ray | Suite::All)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::EACH
            .iter()
            .chain(&[Suite::All])
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid("suite", format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::invalid("format", format!("expected json or csv, got {s:?}"))),
        }
    }
}

/// Sample sizes of the non-mesh suites and the ray grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialCounts {
    pub ray_directions: usize,
    pub ray_points: usize,
    pub ray_half_width: f64,
    pub profiles: usize,
    pub phi_profiles: usize,
    pub bound_samples: usize,
    pub rank_one: usize,
    pub monomial: usize,
    pub harmonic: usize,
    pub composite: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        Self {
            ray_directions: 50,
            ray_points: 401,
            ray_half_width: 10.0,
            profiles: 200,
            phi_profiles: 50,
            bound_samples: 100_000,
            rank_one: 10_000,
            monomial: 500,
            harmonic: 100,
            composite: 50,
        }
    }
}

impl TrialCounts {
    /// A fast configuration for smoke tests.
    pub fn small() -> Self {
        Self {
            ray_directions: 3,
            ray_points: 41,
            ray_half_width: 10.0,
            profiles: 10,
            phi_profiles: 5,
            bound_samples: 1000,
            rank_one: 100,
            monomial: 20,
            harmonic: 4,
            composite: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: Suite,
    #[serde(rename = "N_list")]
    pub sizes: Vec<usize>,
    pub starts: usize,
    pub master_seed: u64,
    pub amplitude: f64,
    pub p_list: Vec<f64>,
    pub tolerances: CgOptions,
    /// Not stored in records, so a replay never overwrites anything.
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub trials: TrialCounts,
    /// A fixed direction for the ray suite; random directions are used otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray_direction: Option<GridFunction>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            sizes: vec![6, 8, 12, 16],
            starts: 20,
            master_seed: 20_240_601,
            amplitude: 5.0,
            p_list: vec![1.2, 1.5, 3.0, 5.0],
            tolerances: CgOptions::default(),
            output_path: None,
            format: Format::Json,
            trials: TrialCounts::default(),
            ray_direction: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.suite.uses_mesh() && self.sizes.is_empty() && self.ray_direction.is_none() {
            return Err(Error::invalid("N_list", "mesh suites need at least one size"));
        }
        for &n in &self.sizes {
            TorusGrid::new(n).map_err(|_| Error::invalid("N_list", format!("sizes must be at least 1, got {n}")))?;
        }
        if self.starts == 0 {
            return Err(Error::invalid("starts", "need at least one start"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("amplitude", format!("must be positive, got {}", self.amplitude)));
        }
        if self.p_list.is_empty() {
            return Err(Error::invalid("p_list", "need at least one exponent"));
        }
        for &p in &self.p_list {
            Exponent::new(p).map_err(|_| Error::invalid("p_list", format!("entries must exceed 1, got {p}")))?;
        }
        if self.trials.ray_points < 2 {
            return Err(Error::invalid("ray_points", "need at least two points"));
        }
        if !(self.trials.ray_half_width > 0.0 && self.trials.ray_half_width.is_finite()) {
            return Err(Error::invalid("ray_half_width", "must be positive"));
        }
        self.tolerances.validate()
    }
}

/// One checked quantity. `margin ≥ 0` exactly when `passed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub suite: Suite,
    pub label: String,
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub value: f64,
    pub margin: f64,
    pub passed: bool,
}

impl ItemResult {
    fn new(suite: Suite, label: &str, value: f64, margin: f64) -> Self {
        Self {
            suite,
            label: label.to_string(),
            seed: None,
            n: None,
            p: None,
            value,
            margin,
            passed: margin >= 0.0,
        }
    }

    fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn size(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn exponent(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub items: usize,
    pub worst_margin: f64,
    pub passed: bool,
    /// Informational findings that do not affect `passed`.
    pub notes: Vec<String>,
}

impl fmt::Display for SuiteSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} items={:<6} worst_margin={:+.3e} {}",
            self.suite.name(),
            self.items,
            self.worst_margin,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// `(t, h(t))` for one ray direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayTable {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: Option<u64>,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub concavity_witnesses: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub artifact_version: String,
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub suites: Vec<SuiteSummary>,
    pub items: Vec<ItemResult>,
    pub minimizations: Vec<MinimizationResult>,
    pub ray_tables: Vec<RayTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_one: Option<RankOneReport>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: RunRecord = serde_json::from_str(text)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "record schema {} is not supported (expected {SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        Ok(rec)
    }

    /// One CSV row per item, with a header.
    pub fn items_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for item in &self.items {
            w.serialize(item)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let text = match format {
            Format::Json => self.to_json()?,
            Format::Csv => self.items_csv()?,
        };
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn items_from_csv(text: &str) -> Result<Vec<ItemResult>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// `(t, h)` rows with a header, for plotting a ray profile.
pub fn ray_table_csv(table: &RayTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "h"])?;
    for (t, h) in table.t.iter().zip(&table.h) {
        w.write_record([t.to_string(), h.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Default)]
struct SuiteOutput {
    items: Vec<ItemResult>,
    notes: Vec<String>,
    minimizations: Vec<MinimizationResult>,
    ray_tables: Vec<RayTable>,
    rank_one: Option<RankOneReport>,
}

fn suite_seed(master: u64, suite: Suite) -> u64 {
    derive_seed(master, 0x5157_0000 + suite as u64)
}

fn wrap(k: usize, seed: u64) -> impl FnOnce(Error) -> Error {
    move |e| Error::Start {
        start: k,
        seed,
        source: Box::new(e),
    }
}

fn run_minimize(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for &n in &cfg.sizes {
        let results = multistart(n, cfg.starts, derive_seed(cfg.master_seed, n as u64), cfg.amplitude, &cfg.tolerances)?;
        for r in &results {
            out.items.push(
                ItemResult::new(Suite::Minimize, "minimum", r.final_value, r.final_value + tolerance::MINIMUM)
                    .seed(r.start_seed)
                    .size(n),
            );
        }
        out.minimizations.extend(results);
    }
    Ok(out)
}

fn ray_item(dir: &GridFunction, cfg: &ExperimentConfig, seed: Option<u64>) -> Result<(ItemResult, RayTable)> {
    let w = cfg.trials.ray_half_width;
    let t = linspace(-w, w, cfg.trials.ray_points);
    let prof = ray_profile(dir, &t)?;
    let worst = prof.increasing_violation.max(prof.decreasing_violation);
    let n = dir.grid().n();
    let mut item = ItemResult::new(Suite::Ray, "monotone", worst, tolerance::RAY_MONOTONE - worst).size(n);
    item.seed = seed;
    let table = RayTable {
        n,
        seed,
        t: prof.t,
        h: prof.h,
        concavity_witnesses: prof.concavity_witnesses,
    };
    Ok((item, table))
}

fn run_ray(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    if let Some(dir) = &cfg.ray_direction {
        let (item, table) = ray_item(dir, cfg, None)?;
        out.items.push(item);
        out.ray_tables.push(table);
    } else {
        let base = suite_seed(cfg.master_seed, Suite::Ray);
        for &n in &cfg.sizes {
            let grid = TorusGrid::new(n)?;
            let rows: Vec<(ItemResult, RayTable)> = (0..cfg.trials.ray_directions)
                .into_par_iter()
                .map(|k| {
                    let seed = derive_seed(base, (n as u64) << 32 | k as u64);
                    let dir = GridFunction::from_coefficients(grid, random_start(grid, seed, 1.0))?;
                    ray_item(&dir, cfg, Some(seed)).map_err(wrap(k, seed))
                })
                .collect::<Result<_>>()?;
            let mut witnesses = 0;
            for (item, table) in rows {
                out.items.push(item);
                if !table.concavity_witnesses.is_empty() {
                    witnesses += 1;
                    out.ray_tables.push(table);
                }
            }
            out.notes.push(format!(
                "N={n}: {witnesses} of {} directions have a concave stretch",
                cfg.trials.ray_directions
            ));
        }
    }
    Ok(out)
}

fn run_stretch(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let base = suite_seed(cfg.master_seed, Suite::Stretch);

    let power: Vec<Vec<ItemResult>> = (0..cfg.trials.profiles)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(base, k as u64);
            let g = random_power_profile(&mut item_stream(seed, 0));
            let exact = integral_l_stretch(&g).map_err(wrap(k, seed))?;
            let quad = integral_l_stretch_quadrature(&g).map_err(wrap(k, seed))?.value;
            Ok(vec![
                ItemResult::new(Suite::Stretch, "s1-closed-form", exact, tolerance::CLOSED_FORM_ZERO - exact.abs())
                    .seed(seed),
                ItemResult::new(Suite::Stretch, "s1-quadrature", quad, tolerance::QUADRATURE_ZERO - quad.abs()).seed(seed),
            ])
        })
        .collect::<Result<_>>()?;
    out.items.extend(power.into_iter().flatten());

    let base2 = derive_seed(base, 1 << 40);
    let sampled: Vec<Vec<ItemResult>> = (0..cfg.trials.profiles)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(base2, k as u64);
            let g = random_sampled_profile(&mut item_stream(seed, 0));
            let v = integral_l_stretch(&g).map_err(wrap(k, seed))?;
            let runs = steep_runs(&g).map_err(wrap(k, seed))?;
            let tele = runs.iter().map(|r| r.telescoped).fold(f64::INFINITY, f64::min);
            let mut rows = vec![ItemResult::new(Suite::Stretch, "lipschitz", v, v + tolerance::LIPSCHITZ_INTEGRAL).seed(seed)];
            if tele.is_finite() {
                rows.push(ItemResult::new(Suite::Stretch, "telescoped", tele, tele + tolerance::TELESCOPED).seed(seed));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    out.items.extend(sampled.into_iter().flatten());

    for (j, &q) in cfg.p_list.iter().enumerate() {
        let p = Exponent::new(q)?;
        if q != 2.0 {
            // the swapped arguments vanish for p > 2, the plain ones for p < 2
            let swap = q > 2.0;
            let pbase = derive_seed(base, (2 << 40) + j as u64);
            let mut found = 0;
            let mut attempt = 0u64;
            while found < cfg.trials.phi_profiles && attempt < 100 * cfg.trials.phi_profiles as u64 {
                let seed = derive_seed(pbase, attempt);
                attempt += 1;
                let g = random_power_profile(&mut item_stream(seed, 0));
                match integral_phi_stretch(&g, &p, swap) {
                    Ok(v) => {
                        found += 1;
                        out.items.push(
                            ItemResult::new(Suite::Stretch, "phi-zero", v, tolerance::PHI_ZERO - v.abs())
                                .seed(seed)
                                .exponent(q),
                        );
                    }
                    Err(Error::Divergent(_)) => {}
                    Err(e) => return Err(wrap(found, seed)(e)),
                }
            }
            out.notes.push(format!("p={q}: {found} finite profiles of {attempt} drawn"));
        }

        let target = (q - 1.0).powf(q);
        // the approach to the limit slows like p^p, so sit close to 1/p
        let near = 1.0 / q - 1e-6;
        let ratio = falpha_ratio(&p, near)?;
        let rel = (ratio / target - 1.0).abs();
        out.items
            .push(ItemResult::new(Suite::Stretch, "saturation", ratio, tolerance::SATURATION - rel).exponent(q));
        if q < 2.0 {
            continue;
        }
        let alphas = linspace(0.05 / q, near, 40);
        let ratios = alphas.iter().map(|&a| falpha_ratio(&p, a)).collect::<Result<Vec<_>>>()?;
        // at p = 2 the ratio is identically 1, above it it must increase strictly
        let (value, margin) = if q == 2.0 {
            let dev = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            (dev, 1e-14 - dev)
        } else {
            let step = ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            (step, step)
        };
        let item = ItemResult::new(Suite::Stretch, "saturation-monotone", value, margin).exponent(q);
        out.items.push(item);
    }
    Ok(out)
}

fn run_identities(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for pt in identity_grid(&IdentityGrid::default())? {
        let err = pt.check.relative_error;
        let mut item = ItemResult::new(Suite::Identities, "moment", err, tolerance::MOMENT_IDENTITY - err).exponent(pt.p);
        item.label = format!("moment |z|={} |w|={}", pt.z, pt.w);
        out.items.push(item);
    }
    let base = suite_seed(cfg.master_seed, Suite::Identities);
    let mut exps = cfg.p_list.clone();
    if !exps.contains(&2.0) {
        exps.push(2.0);
    }
    for (j, &q) in exps.iter().enumerate() {
        let p = Exponent::new(q)?;
        let seed = derive_seed(base, j as u64);
        let mut rng = item_stream(seed, 0);
        let mut worst = f64::INFINITY;
        for _ in 0..cfg.trials.bound_samples {
            let z = random_coefficient(&mut rng) * rng.gen_range(0.0..2.0);
            let w = random_coefficient(&mut rng) * rng.gen_range(0.0..2.0);
            worst = worst.min(phi_upper_bound_gap(&WirtingerPair::new(z, w)?, &p));
        }
        let edge = phi_upper_bound_gap(&WirtingerPair::real(1.0, p.pstar() - 1.0)?, &p);
        worst = worst.min(edge);
        out.items.push(
            ItemResult::new(Suite::Identities, "bound-gap", worst, worst + tolerance::BOUND_GAP)
                .seed(seed)
                .exponent(q),
        );
    }
    Ok(out)
}

fn run_rankone(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let seed = suite_seed(cfg.master_seed, Suite::Rankone);
    let report = rank_one_convexity_test(cfg.trials.rank_one.max(1), seed)?;
    let excess = report.max_midpoint_excess;
    let cf = report.max_closed_form_error;
    let mut out = SuiteOutput::default();
    out.items
        .push(ItemResult::new(Suite::Rankone, "midpoint", excess, MIDPOINT_TOLERANCE - excess).seed(seed));
    out.items.push(
        ItemResult::new(Suite::Rankone, "closed-form", cf, tolerance::RANK_ONE_CLOSED_FORM - cf).seed(seed),
    );
    if !report.violations.is_empty() {
        out.notes.push(format!("{} probes violate midpoint convexity", report.violations.len()));
    }
    out.rank_one = Some(report);
    Ok(out)
}

fn run_families(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let base = suite_seed(cfg.master_seed, Suite::Families);

    let mono_base = derive_seed(base, 0);
    let mono: Vec<ItemResult> = (0..cfg.trials.monomial)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(mono_base, k as u64);
            let mut rng = item_stream(seed, 0);
            let scale = 10f64.powf(rng.gen_range(-1.0..=1.0));
            let (a, b) = (random_coefficient(&mut rng) * scale, random_coefficient(&mut rng) * scale);
            let k_deg = rng.gen_range(1..=5);
            let v = monomial_pair_integral(a, b, k_deg).map_err(wrap(k, seed))?;
            Ok(ItemResult::new(Suite::Families, "monomial", v, v + tolerance::MONOMIAL).seed(seed))
        })
        .collect::<Result<_>>()?;
    out.items.extend(mono);

    let radii = linspace(0.0, 1.0, 101);
    for (j, &q) in cfg.p_list.iter().enumerate().filter(|(_, q)| **q > 2.0) {
        let p = Exponent::new(q)?;
        let hbase = derive_seed(base, 1 + j as u64);
        let rows: Vec<Vec<ItemResult>> = (0..cfg.trials.harmonic)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed(hbase, k as u64);
                let mut rng = item_stream(seed, 0);
                let g = random_polynomial(&mut rng, 4);
                let h = random_polynomial(&mut rng, 4);
                let v = harmonic_family_integral(&g, &h, &p).map_err(wrap(k, seed))?;
                let drop = circle_mean_decrease(&g, &h, q, &radii);
                Ok(vec![
                    ItemResult::new(Suite::Families, "harmonic", v, v + tolerance::HARMONIC)
                        .seed(seed)
                        .exponent(q),
                    ItemResult::new(Suite::Families, "circle-means", drop, tolerance::CIRCLE_MEANS - drop)
                        .seed(seed)
                        .exponent(q),
                ])
            })
            .collect::<Result<_>>()?;
        out.items.extend(rows.into_iter().flatten());
    }

    let cbase = derive_seed(base, 1 << 40);
    let mut found = 0;
    let mut attempt = 0u64;
    while found < cfg.trials.composite && attempt < 100 * cfg.trials.composite as u64 {
        let seed = derive_seed(cbase, attempt);
        attempt += 1;
        let mut rng = item_stream(seed, 0);
        let deg = rng.gen_range(1..=3);
        let outer: Vec<_> = (0..=deg).map(|_| random_coefficient(&mut rng)).collect();
        let profile = if rng.gen_bool(0.5) {
            random_power_profile(&mut rng)
        } else {
            random_sampled_profile(&mut rng)
        };
        let q = cfg.p_list[rng.gen_range(0..cfg.p_list.len())];
        let conjugate = rng.gen_bool(0.5);
        match composite_family_integral(&outer, &profile, &Exponent::new(q)?, conjugate) {
            Ok(v) => {
                found += 1;
                out.items.push(
                    ItemResult::new(Suite::Families, "composite", v, v + tolerance::COMPOSITE)
                        .seed(seed)
                        .exponent(q),
                );
            }
            Err(Error::Divergent(_)) => {}
            Err(e) => return Err(wrap(found, seed)(e)),
        }
    }
    out.notes.push(format!("{found} finite composites of {attempt} drawn"));
    Ok(out)
}

fn run_suite(suite: Suite, cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    match suite {
        Suite::Minimize => run_minimize(cfg),
        Suite::Ray => run_ray(cfg),
        Suite::Stretch => run_stretch(cfg),
        Suite::Identities => run_identities(cfg),
        Suite::Rankone => run_rankone(cfg),
        Suite::Families => run_families(cfg),
        Suite::All => unreachable!("expanded before dispatch"),
    }
}

/// Executes the configured suites and, if an output path is set, writes the record.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let record = execute(cfg)?;
    if let Some(path) = &cfg.output_path {
        record.write(path, cfg.format)?;
    }
    Ok(record)
}

/// [`run`] without writing anything.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let mut record = RunRecord {
        schema_version: SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        config: cfg.clone(),
        suites: Vec::new(),
        items: Vec::new(),
        minimizations: Vec::new(),
        ray_tables: Vec::new(),
        rank_one: None,
    };
    for suite in cfg.suite.expand() {
        let out = run_suite(suite, cfg)?;
        let worst_margin = out.items.iter().map(|i| i.margin).fold(f64::INFINITY, f64::min);
        record.suites.push(SuiteSummary {
            suite,
            items: out.items.len(),
            worst_margin: if worst_margin.is_finite() { worst_margin } else { 0.0 },
            passed: out.items.iter().all(|i| i.passed),
            notes: out.notes,
        });
        record.items.extend(out.items);
        record.minimizations.extend(out.minimizations);
        record.ray_tables.extend(out.ray_tables);
        if out.rank_one.is_some() {
            record.rank_one = out.rank_one;
        }
    }
    Ok(record)
}

/// A field that differs between a record and its replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub item: Option<usize>,
    pub field: String,
    pub recorded: String,
    pub replayed: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub replayed: RunRecord,
    pub drift: Vec<Drift>,
}

impl ReplayReport {
    pub fn clean(&self) -> bool {
        self.drift.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= REPLAY_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Field-by-field comparison of two records of the same config.
pub fn compare(recorded: &RunRecord, replayed: &RunRecord) -> Vec<Drift> {
    let mut drift = Vec::new();
    let mut push = |item: Option<usize>, field: &str, a: String, b: String| {
        drift.push(Drift {
            item,
            field: field.to_string(),
            recorded: a,
            replayed: b,
        })
    };
    if recorded.items.len() != replayed.items.len() {
        push(
            None,
            "items.len",
            recorded.items.len().to_string(),
            replayed.items.len().to_string(),
        );
    }
    for (k, (a, b)) in recorded.items.iter().zip(&replayed.items).enumerate() {
        if (a.suite, &a.label, a.seed, a.n) != (b.suite, &b.label, b.seed, b.n) || a.p != b.p {
            push(Some(k), "identity", format!("{} {}", a.suite, a.label), format!("{} {}", b.suite, b.label));
            continue;
        }
        if !close(a.value, b.value) {
            push(Some(k), "value", a.value.to_string(), b.value.to_string());
        }
        if !close(a.margin, b.margin) {
            push(Some(k), "margin", a.margin.to_string(), b.margin.to_string());
        }
        if a.passed != b.passed {
            push(Some(k), "passed", a.passed.to_string(), b.passed.to_string());
        }
    }
    for (k, (a, b)) in recorded.minimizations.iter().zip(&replayed.minimizations).enumerate() {
        if a.iterations != b.iterations || a.termination != b.termination {
            push(
                Some(k),
                "minimizations.iterations",
                format!("{} {:?}", a.iterations, a.termination),
                format!("{} {:?}", b.iterations, b.termination),
            );
        }
        if !close(a.final_value, b.final_value) {
            push(Some(k), "minimizations.final_value", a.final_value.to_string(), b.final_value.to_string());
        }
    }
    for s in recorded.suites.iter().zip(&replayed.suites) {
        if s.0.passed != s.1.passed {
            push(None, "suites.passed", format!("{} {}", s.0.suite, s.0.passed), s.1.passed.to_string());
        }
    }
    drift
}

/// Re-executes the config stored in the record at `path` and reports drift.
pub fn replay(path: &Path) -> Result<ReplayReport> {
    let recorded = RunRecord::read(path)?;
    replay_record(&recorded)
}

pub fn replay_record(recorded: &RunRecord) -> Result<ReplayReport> {
    let replayed = execute(&recorded.config)?;
    let drift = compare(recorded, &replayed);
    Ok(ReplayReport { replayed, drift })
}
