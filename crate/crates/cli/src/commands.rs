//! The subcommands: resolve configuration, call the library, render.

use std::f64::consts::PI;

use lamelab_core::capacity::{capacity, capacity_inequality, voxel_ball, CAPACITY_TOLERANCE};
use lamelab_core::elastic::ElasticParameter;
use lamelab_core::field::{RandomFieldOptions, TestFieldSpec};
use lamelab_core::fixtures::Fixture;
use lamelab_core::form::{coercivity_bound, form_reports, grid_for, IDENTITY_TOLERANCE, NEGATIVE_THRESHOLD};
use lamelab_core::probe::{run_probe, DecayFit, PoincareCheck, ProbeConfig, PROBE_TOLERANCE};
use lamelab_core::quadrature::{PolarGrid, SUPPORT_TOLERANCE};
use lamelab_core::region::{positivity_interval, region_report, SCAN_STEP};
use lamelab_core::voxel::{VoxelDomain, VoxelSet};
use serde_json::{json, Value};

use crate::config::{parse_list, parse_spacing, ConfigFile};
use crate::output::{envelope, Cell, Table};
use crate::{
    CapacityArgs, Cli, CliError, Command, FixtureArgs, FormArgs, Format, ProbeArgs, RegionArgs, Rendered, Resolution,
};

pub const DEFAULT_REGION_TOL: f64 = 1e-10;
pub const DEFAULT_SEEDS: usize = 5;
/// Relative slack allowed below the coercivity lower bound.
pub const COERCIVITY_SLACK: f64 = 1e-3;
/// Relative agreement required between the equality- and
/// inequality-constrained capacities.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-4;
/// Fixtures for `probe` are sampled on `[-1, 1]³`.
pub const PROBE_EXTENT: f64 = 1.0;

fn tolerances() -> Value {
    json!({
        "identity_relative": IDENTITY_TOLERANCE,
        "support": SUPPORT_TOLERANCE,
        "coercivity_slack": COERCIVITY_SLACK,
        "negative_threshold": NEGATIVE_THRESHOLD,
        "region_scan_step": SCAN_STEP,
        "capacity_residual": CAPACITY_TOLERANCE,
        "capacity_equivalence": EQUIVALENCE_TOLERANCE,
        "probe_residual": PROBE_TOLERANCE,
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types always serialize")
}

fn flag(set: bool, cfg: &ConfigFile, key: &str) -> Result<bool, CliError> {
    cfg.pick(set.then_some(true), key, false)
}

fn allowed_keys(cmd: &Command) -> &'static [&'static str] {
    match cmd {
        Command::Region(_) => &["format", "tol"],
        Command::Form(_) => &["format", "alpha", "seeds", "resolution", "coercivity", "tol"],
        Command::Capacity(_) => &["format", "ball", "h", "tol", "complement", "equivalence"],
        Command::Probe(_) => &["format", "fixture", "alpha", "levels", "radius", "h", "tol"],
        Command::Fixture(_) => &["h", "extent"],
    }
}

pub fn dispatch(cli: &Cli) -> Result<Rendered, CliError> {
    let keys = allowed_keys(&cli.command);
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path, keys)?,
        None => ConfigFile::default(),
    };
    let format = |default: Format| -> Result<Format, CliError> {
        if let Some(f) = cli.format {
            return Ok(f);
        }
        match cfg.raw("format") {
            None => Ok(default),
            Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            Some(other) => Err(CliError::Usage(format!("format must be json or csv, got '{other}'"))),
        }
    };
    match &cli.command {
        Command::Region(a) => region(a, &cfg, format(Format::Json)?),
        Command::Form(a) => form(a, &cfg, format(Format::Csv)?),
        Command::Capacity(a) => capacity_cmd(a, &cfg, format(Format::Json)?),
        Command::Probe(a) => probe(a, &cfg, format(Format::Json)?),
        Command::Fixture(a) => fixture(a, &cfg),
    }
}

fn render(format: Format, command: &str, config: Value, result: Value, table: Table, passed: bool) -> Rendered {
    let text = match format {
        Format::Json => envelope(command, config, tolerances(), result),
        Format::Csv => table.to_csv(),
    };
    Rendered { text, passed }
}

fn region(a: &RegionArgs, cfg: &ConfigFile, format: Format) -> Result<Rendered, CliError> {
    let tol = cfg.pick(a.tol, "tol", DEFAULT_REGION_TOL)?;
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let r = region_report(tol)?;
    let mut table = Table::new(&[
        "alpha_minus",
        "alpha_plus",
        "alpha_minus_critical",
        "alpha_plus_critical",
        "bracket_width",
    ]);
    table.rows.push(
        [
            r.alpha_minus,
            r.alpha_plus,
            r.alpha_minus_critical,
            r.alpha_plus_critical,
            r.bracket_width,
        ]
        .map(Cell::Real)
        .to_vec(),
    );
    Ok(render(
        format,
        "region",
        json!({ "tol": tol }),
        to_value(&r),
        table,
        true,
    ))
}

fn form(a: &FormArgs, cfg: &ConfigFile, format: Format) -> Result<Rendered, CliError> {
    let alphas = cfg.pick_with(a.alpha.as_deref(), "alpha", "0", parse_list)?;
    let seeds = cfg.pick(a.seeds, "seeds", DEFAULT_SEEDS)?;
    let tol = cfg.pick(a.tol, "tol", IDENTITY_TOLERANCE)?;
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let resolution = match (a.resolution, cfg.raw("resolution")) {
        (Some(r), _) => r,
        (None, None | Some("default")) => Resolution::Default,
        (None, Some("refined")) => Resolution::Refined,
        (None, Some(other)) => {
            return Err(CliError::Usage(format!(
                "resolution must be default or refined, got '{other}'"
            )))
        }
    };
    let coercivity = flag(a.coercivity, cfg, "coercivity")?;
    let params = alphas
        .iter()
        .map(|&x| ElasticParameter::new(x))
        .collect::<Result<Vec<_>, _>>()?;
    let bounds = if coercivity {
        let (lo, hi) = positivity_interval(1e-12)?;
        let mut b = Vec::with_capacity(params.len());
        for p in &params {
            if !(p.alpha() > lo && p.alpha() < hi) {
                return Err(CliError::Usage(format!(
                    "--coercivity needs alpha inside ({lo:.6}, {hi:.6}), got {}",
                    p.alpha()
                )));
            }
            b.push(coercivity_bound(*p)?);
        }
        b
    } else {
        Vec::new()
    };
    let base = match resolution {
        Resolution::Default => PolarGrid::default(),
        Resolution::Refined => PolarGrid::default().refined(),
    };
    let mut header = vec![
        "seed",
        "alpha",
        "lhs",
        "point_term",
        "bilinear_star",
        "residual",
        "scale",
        "relative_residual",
    ];
    if coercivity {
        header.extend(["coercivity_ratio", "coercivity_bound"]);
    }
    let mut table = Table::new(&header);
    let mut rows = Vec::new();
    let mut passed = true;
    for seed in 0..seeds as u64 {
        let u = TestFieldSpec::random(seed, &RandomFieldOptions::default());
        let reports = form_reports(&params, &u, &grid_for(&u, &base))?;
        for (i, r) in reports.iter().enumerate() {
            let rel = r.residual.abs() / r.scale;
            passed &= rel <= tol;
            let mut row = vec![Cell::Int(seed as i64), Cell::Real(r.alpha)];
            row.extend([r.lhs, r.point_term, r.bilinear_star, r.residual, r.scale, rel].map(Cell::Real));
            let mut entry = json!({ "seed": seed, "relative_residual": rel, "report": to_value(r) });
            if coercivity {
                passed &= r.coercivity_ratio >= bounds[i] * (1.0 - COERCIVITY_SLACK);
                row.extend([Cell::Real(r.coercivity_ratio), Cell::Real(bounds[i])]);
                entry["coercivity_bound"] = json!(bounds[i]);
            }
            table.rows.push(row);
            rows.push(entry);
        }
    }
    let config = json!({
        "alpha": alphas,
        "seeds": seeds,
        "resolution": match resolution { Resolution::Default => "default", Resolution::Refined => "refined" },
        "coercivity": coercivity,
        "tol": tol,
        "field_options": to_value(&RandomFieldOptions::default()),
    });
    let result = json!({ "rows": rows, "passed": passed });
    Ok(render(format, "form", config, result, table, passed))
}

fn capacity_cmd(a: &CapacityArgs, cfg: &ConfigFile, format: Format) -> Result<Rendered, CliError> {
    let tol = cfg.pick(a.tol, "tol", CAPACITY_TOLERANCE)?;
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let equivalence = flag(a.equivalence, cfg, "equivalence")?;
    let complement = flag(a.complement, cfg, "complement")?;
    let ball = match (a.ball, cfg.raw("ball")) {
        (Some(b), _) => Some(b),
        (None, Some(t)) => Some(
            t.parse()
                .map_err(|_| CliError::Usage(format!("ball: cannot parse '{t}'")))?,
        ),
        (None, None) => None,
    };
    let (set, source, reference, config) = match (&a.voxfile, ball) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either a voxdom file or --ball, not both".into())),
        (None, None) => return Err(CliError::Usage("give a voxdom file or --ball".into())),
        (None, Some(rho)) => {
            let h = cfg.pick_with(a.h.as_deref(), "h", "1/64", parse_spacing)?;
            let set = voxel_ball(rho, h)?;
            let config = json!({ "ball": rho, "h": h, "tol": tol, "equivalence": equivalence });
            (set, "ball".to_string(), Some(4.0 * PI * rho), config)
        }
        (Some(path), None) => {
            let dom = VoxelDomain::read(path)?;
            let mask = dom.open.iter().map(|&o| o != complement).collect();
            let set = VoxelSet::new(dom.lattice, mask)?;
            let config = json!({
                "voxfile": path.display().to_string(),
                "complement": complement,
                "tol": tol,
                "equivalence": equivalence,
            });
            (set, path.display().to_string(), None, config)
        }
    };
    let est = capacity(&set, tol)?;
    let inequality = if equivalence {
        Some(capacity_inequality(&set, tol)?)
    } else {
        None
    };
    let passed = inequality
        .is_none_or(|q| (q.value - est.value).abs() <= EQUIVALENCE_TOLERANCE * est.value.max(f64::MIN_POSITIVE));
    let mut header = vec!["value", "grid_level", "residual", "iterations", "nodes", "voxels"];
    if equivalence {
        header.push("inequality_value");
    }
    let mut table = Table::new(&header);
    let mut row = vec![
        Cell::Real(est.value),
        Cell::Int(est.grid_level as i64),
        Cell::Real(est.residual),
        Cell::Int(est.iterations as i64),
        Cell::Int(est.nodes as i64),
        Cell::Int(set.count() as i64),
    ];
    if let Some(q) = inequality {
        row.push(Cell::Real(q.value));
    }
    table.rows.push(row);
    let result = json!({
        "source": source,
        "voxels": set.count(),
        "capacity": to_value(&est),
        "inequality": inequality.map(|q| to_value(&q)),
        "reference": reference,
        "passed": passed,
    });
    Ok(render(format, "capacity", config, result, table, passed))
}

fn probe(a: &ProbeArgs, cfg: &ConfigFile, format: Format) -> Result<Rendered, CliError> {
    let defaults = ProbeConfig::default();
    let fixture_name = a.fixture.clone().or(cfg.raw("fixture").map(str::to_string));
    let pcfg = ProbeConfig {
        alpha: cfg.pick(a.alpha, "alpha", defaults.alpha)?,
        r: cfg.pick(a.radius, "radius", defaults.r)?,
        levels: cfg.pick(a.levels, "levels", defaults.levels)?,
        tol: cfg.pick(a.tol, "tol", defaults.tol)?,
        ..defaults
    };
    if !(pcfg.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", pcfg.tol)));
    }
    let (dom, fixture, source, h) = match (&a.voxfile, fixture_name) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give either a voxdom file or --fixture, not both".into(),
            ))
        }
        (None, None) => return Err(CliError::Usage("give a voxdom file or --fixture".into())),
        (None, Some(name)) => {
            let f: Fixture = name.parse()?;
            let h = cfg.pick_with(a.h.as_deref(), "h", "1/64", parse_spacing)?;
            let m = (PROBE_EXTENT / h).round();
            if m < 1.0 || (m * h - PROBE_EXTENT).abs() > 1e-9 {
                return Err(CliError::Usage(format!("h must divide {PROBE_EXTENT}, got {h}")));
            }
            (f.voxel_domain(m as usize, h), Some(f), f.name().to_string(), Some(h))
        }
        (Some(path), None) => (VoxelDomain::read(path)?, None, path.display().to_string(), None),
    };
    let shape = fixture.map(Fixture::shape);
    let out = run_probe(&dom, shape.as_deref(), &pcfg)?;
    let passed = match out.fit {
        DecayFit::Fitted { c2, .. } => c2 > 0.0,
        DecayFit::NoDecayExpected => true,
    };
    let mut table = Table::new(&[
        "rho",
        "m_rho",
        "M_rho",
        "phi_rho",
        "psi_rho",
        "wiener_partial",
        "cap_ball",
        "gamma",
        "caccioppoli_ratio",
        "poincare_ratio",
    ]);
    let rep = &out.report;
    for (j, level) in out.wiener.levels.iter().enumerate() {
        let opt = |v: Option<f64>| v.map_or(Cell::Text(String::new()), Cell::Real);
        let poincare = match out.poincare[j] {
            PoincareCheck::Skipped { .. } => Cell::Text("skipped".into()),
            p => opt(p.ratio()),
        };
        table.rows.push(vec![
            Cell::Real(rep.radii[j]),
            Cell::Real(rep.m_rho[j]),
            Cell::Real(rep.big_m_rho[j]),
            Cell::Real(rep.phi_rho[j]),
            Cell::Real(rep.psi_rho[j]),
            Cell::Real(rep.wiener_partials[j]),
            Cell::Real(level.cap_ball),
            Cell::Real(level.gamma),
            opt(out.caccioppoli[j].ratio()),
            poincare,
        ]);
    }
    let config = json!({
        "domain": source,
        "alpha": pcfg.alpha,
        "radius": pcfg.r,
        "levels": pcfg.levels,
        "tol": pcfg.tol,
        "h": h.unwrap_or(dom.h()),
        "extent": fixture.map(|_| PROBE_EXTENT),
        "wiener": to_value(&pcfg.wiener),
        "forcing": to_value(&pcfg.forcing),
    });
    let result = json!({ "outcome": to_value(&out), "passed": passed });
    Ok(render(format, "probe", config, result, table, passed))
}

fn fixture(a: &FixtureArgs, cfg: &ConfigFile) -> Result<Rendered, CliError> {
    let f: Fixture = a.name.parse()?;
    let h = cfg.pick_with(a.h.as_deref(), "h", "1/64", parse_spacing)?;
    let extent = cfg.pick(a.extent, "extent", 1.0)?;
    let m = (extent / h).round();
    if !(m >= 1.0) {
        return Err(CliError::Usage(format!("extent {extent} holds no voxel of size {h}")));
    }
    Ok(Rendered {
        text: f.voxel_domain(m as usize, h).to_voxdom(),
        passed: true,
    })
}
