use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::Result;
use opspace_core::factorize::{
    cb_lower_matrix_map, distance_to_oh, pairwise_distance, project_onto, DistanceOptions, DistanceReport,
};
use opspace_core::linalg::op_norm;
use opspace_core::models::{
    clifford_identity_suite, clifford_ratio_probe, closed_form_min_norm, column_space_square, model_space,
    row_space_square,
};
use opspace_core::summing::{pi2oh_lower, pi2oh_upper_certificate, verify_certificate, CertificateOptions};
use opspace_core::{min_norm, CMat, ModelKind, OperatorSpace, Presentation, SearchParams, TargetMap, TupleOfElements};
use serde::Deserialize;
use serde_json::json;

use crate::report::{num, Report};

/// Bad input from the user; mapped to exit code 3.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(InputError(msg.into()).into())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub space: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub tol: f64,
    pub level: usize,
}

impl RunConfig {
    fn search(&self) -> SearchParams {
        let d = SearchParams::default();
        SearchParams { restarts: self.restarts.unwrap_or(d.restarts), seed: self.seed.unwrap_or(d.seed), ..d }
    }

    fn clifford_search(&self, n: usize) -> SearchParams {
        // 64×64 superoperators from n = 5 on; smaller default budget there.
        let (r, it) = if n >= 5 { (6, 400) } else { (12, 1000) };
        SearchParams { restarts: self.restarts.unwrap_or(r), iterations: it, seed: self.seed.unwrap_or(5), ..SearchParams::default() }
    }

    fn distance(&self) -> DistanceOptions {
        let d = DistanceOptions::default();
        DistanceOptions { restarts: self.restarts.unwrap_or(d.restarts), seed: self.seed.unwrap_or(d.seed), ..d }
    }

    fn need_n(&self) -> Result<usize> {
        match self.n {
            Some(n) if n >= 1 => Ok(n),
            Some(_) => input("--n must be at least 1"),
            None => input("--n is required for this command"),
        }
    }
}

/// A resolved `--space`: a named model of dimension `n` or a presentation file.
pub struct SpaceArg {
    pub kind: Option<ModelKind>,
    pub space: Arc<OperatorSpace>,
    pub name: String,
}

impl SpaceArg {
    fn describe(&self) -> serde_json::Value {
        let shape = self.space.presentation().map(|p| p.shape());
        json!({ "name": self.name, "label": self.space.label(), "dim": self.space.dim(), "shape": shape })
    }
}

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {path}: {e}")).into())
}

/// Parses `desc` as a model name (needs `n`) or else as a path to a presentation JSON file.
/// With `square`, row and column models are realized inside `M_n`.
pub fn load_space(desc: &str, n: Option<usize>, square: bool) -> Result<SpaceArg> {
    if let Ok(kind) = ModelKind::from_str(desc) {
        let n = match n {
            Some(n) if n >= 1 => n,
            _ => return input(format!("model space '{desc}' needs --n >= 1")),
        };
        let space = match (kind, square) {
            (ModelKind::Row, true) => OperatorSpace::from(row_space_square(n)).into_arc(),
            (ModelKind::Column, true) => OperatorSpace::from(column_space_square(n)).into_arc(),
            _ => model_space(kind, n)?,
        };
        return Ok(SpaceArg { kind: Some(kind), space, name: format!("{kind}_{n}") });
    }
    if !Path::new(desc).exists() {
        return input(format!("'{desc}' is neither a model name (row, column, oh, clifford) nor a file"));
    }
    let text = read_file(desc)?;
    let p = Presentation::from_json(&text).map_err(|e| InputError(format!("{desc}: {e}")))?;
    Ok(SpaceArg { kind: None, space: OperatorSpace::from(p).into_arc(), name: desc.to_string() })
}

fn space_of(cfg: &RunConfig, square: bool) -> Result<SpaceArg> {
    match &cfg.space {
        Some(s) => load_space(s, cfg.n, square),
        None => input("--space is required for this command"),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TupleFile {
    Wrapped { coeffs: CMat },
    Bare(CMat),
}

pub fn load_tuple(path: &str, space: &Arc<OperatorSpace>) -> Result<TupleOfElements> {
    let text = read_file(path)?;
    // Try the wrapped form first so its parse error, with location, is the one reported.
    let coeffs = match serde_json::from_str::<TupleFile>(&text) {
        Ok(TupleFile::Wrapped { coeffs }) | Ok(TupleFile::Bare(coeffs)) => coeffs,
        Err(_) => match serde_json::from_str::<serde_json::Value>(&text) {
            Err(e) => return input(format!("{path}: {e}")),
            Ok(_) => return input(format!("{path}: expected {{\"coeffs\": {{\"re\": [[..]], \"im\": [[..]]}}}}")),
        },
    };
    TupleOfElements::new(space.clone(), coeffs.into_matrix()).map_err(|e| InputError(format!("{path}: {e}")).into())
}

pub fn model_table(cfg: &RunConfig) -> Result<Report> {
    let nmax = cfg.n.unwrap_or(5);
    if !(2..=6).contains(&nmax) {
        return input("model-table needs 2 <= --n <= 6");
    }
    let tol = cfg.tol;
    let cert_opts = CertificateOptions::default();
    let mut rep = Report::new("model-table", vec!["space", "n", "expected", "lower", "upper", "pass"]);
    let mut rows = Vec::new();
    for kind in [ModelKind::Oh, ModelKind::Row, ModelKind::Column, ModelKind::Clifford] {
        for n in 2..=nmax {
            let s = model_space(kind, n)?;
            let search = if kind == ModelKind::Clifford { cfg.clifford_search(n) } else { cfg.search() };
            let lower = pi2oh_lower(&s, &TargetMap::Identity, n, &search)?.value;
            let upper = pi2oh_upper_certificate(&s, &TargetMap::Identity, &cert_opts)?.constant;
            let nf = n as f64;
            let (expected, ok) = match kind {
                ModelKind::Oh => {
                    let e = nf.sqrt();
                    ("sqrt(n)".to_string(), (lower - e).abs() <= 0.01 * e && upper <= 1.01 * e)
                }
                ModelKind::Row | ModelKind::Column => {
                    let e = nf.powf(0.25);
                    ("n^(1/4)".to_string(), lower >= 0.98 * e && lower <= e + tol && upper <= 1.02 * e)
                }
                ModelKind::Clifford => ("[1, sqrt(2)]".to_string(), lower >= 1.0 - tol && upper <= 2f64.sqrt() + tol),
            };
            let ok = ok && lower <= upper + tol;
            rep.check(ok, format!("{kind}_{n}: lower {lower}, upper {upper} outside {expected}"));
            rep.row(vec![kind.to_string(), n.to_string(), expected.clone(), num(lower), num(upper), ok.to_string()]);
            rows.push(json!({ "space": kind, "n": n, "expected": expected, "lower": lower, "upper": upper, "pass": ok }));
        }
    }
    rep.set("nmax", nmax);
    rep.set("tol", tol);
    rep.set("rows", rows);
    Ok(rep)
}

pub fn minnorm(cfg: &RunConfig, tuple: Option<&str>) -> Result<Report> {
    let sa = space_of(cfg, false)?;
    let t = match tuple {
        Some(path) => load_tuple(path, &sa.space)?,
        None => TupleOfElements::canonical(sa.space.clone()),
    };
    let value = min_norm(&t);
    let mut rep = Report::new("minnorm", vec!["space", "k", "min_norm", "oh_norm", "closed_form"]);
    let closed = match sa.kind {
        Some(kind @ (ModelKind::Row | ModelKind::Column | ModelKind::Oh)) => Some(closed_form_min_norm(kind, t.coeffs())?),
        _ => None,
    };
    if let Some(c) = closed {
        rep.check((value - c).abs() <= cfg.tol * c.max(1.0), format!("engine {value} differs from closed form {c}"));
    }
    rep.row(vec![
        sa.name.clone(),
        t.len().to_string(),
        num(value),
        num(value.sqrt()),
        closed.map(num).unwrap_or_default(),
    ]);
    rep.set("space", sa.describe());
    rep.set("k", t.len());
    rep.set("min_norm", value);
    rep.set("oh_norm", value.sqrt());
    rep.set("closed_form", closed);
    Ok(rep)
}

pub fn pi2oh(cfg: &RunConfig) -> Result<Report> {
    let sa = space_of(cfg, false)?;
    let k = cfg.k.unwrap_or(sa.space.dim());
    if k == 0 {
        return input("--k must be at least 1");
    }
    let search = match sa.kind {
        Some(ModelKind::Clifford) => cfg.clifford_search(sa.space.dim()),
        _ => cfg.search(),
    };
    let target = TargetMap::Identity;
    let w = pi2oh_lower(&sa.space, &target, k, &search)?;
    let cert = pi2oh_upper_certificate(&sa.space, &target, &CertificateOptions::default())?;
    let eig = verify_certificate(&sa.space, &target, &cert)?;
    let scale = 1.0 + op_norm(cert.majorant.matrix());
    let guarantee = (sa.space.dim() as f64).sqrt();
    let mut rep = Report::new("pi2oh", vec!["space", "k", "lower", "upper", "min_eigenvalue", "ceiling"]);
    rep.check(w.value <= cert.constant + cfg.tol, format!("lower {} exceeds upper {}", w.value, cert.constant));
    rep.check(eig >= -1e-8 * scale, format!("certificate re-verification gave eigenvalue {eig}"));
    rep.check(w.value <= guarantee * (1.0 + cfg.tol), format!("lower {} exceeds sqrt(dim) = {guarantee}", w.value));
    rep.row(vec![sa.name.clone(), k.to_string(), num(w.value), num(cert.constant), format!("{eig:.3e}"), num(guarantee)]);
    rep.set("space", sa.describe());
    rep.set("search", search);
    rep.set("lower", &w);
    rep.set("upper", json!({
        "constant": cert.constant,
        "majorant_kind": cert.majorant_kind,
        "atoms": cert.mixture.atoms.len(),
        "rounds": cert.rounds,
        "min_eigenvalue": eig,
        "certificate": cert,
    }));
    rep.set("ceiling", guarantee);
    Ok(rep)
}

pub fn clifford(cfg: &RunConfig, samples: usize) -> Result<Report> {
    let n = cfg.need_n()?;
    let suite = clifford_identity_suite(n, 200, cfg.seed.unwrap_or(n as u64));
    let search = cfg.clifford_search(n);
    let probe = clifford_ratio_probe(n, samples, &search)?;
    let s = model_space(ModelKind::Clifford, n)?;
    let upper = pi2oh_upper_certificate(&s, &TargetMap::Identity, &CertificateOptions::default())?.constant;
    let lower = probe.descent_value;
    let mut rep = Report::new("clifford", vec!["quantity", "value", "bound", "pass"]);
    let residuals = [
        ("hermitian_residual", suite.hermitian_residual),
        ("square_residual", suite.square_residual),
        ("anticommutation_residual", suite.anticommutation_residual),
        ("sum_identity_residual", suite.sum_identity_residual),
        ("trace_residual", suite.trace_residual),
    ];
    for (name, v) in residuals {
        let ok = v <= 1e-12;
        rep.check(ok, format!("{name} = {v:e}"));
        rep.row(vec![name.into(), format!("{v:.3e}"), "<= 1e-12".into(), ok.to_string()]);
    }
    let margins = suite.lower_norm_margin.min(suite.upper_norm_margin);
    rep.check(margins >= -1e-12, format!("norm bounds violated by {margins:e}"));
    rep.row(vec!["norm_margin".into(), format!("{margins:.3e}"), ">= 0".into(), (margins >= -1e-12).to_string()]);
    rep.check(probe.pass, format!("ratio probe reached {}", probe.min_ratio));
    rep.row(vec!["min_ratio".into(), num(probe.min_ratio), ">= 0.5".into(), probe.pass.to_string()]);
    let lo_ok = lower >= 1.0 - cfg.tol && lower <= upper + cfg.tol;
    let up_ok = upper <= 2f64.sqrt() + cfg.tol;
    rep.check(lo_ok, format!("lower {lower} outside [1, upper]"));
    rep.check(up_ok, format!("upper {upper} above sqrt(2)"));
    rep.row(vec!["pi2oh_lower".into(), num(lower), ">= 1".into(), lo_ok.to_string()]);
    rep.row(vec!["pi2oh_upper".into(), num(upper), "<= sqrt(2)".into(), up_ok.to_string()]);
    rep.set("n", n);
    rep.set("identities", &suite);
    rep.set("probe", &probe);
    rep.set("sandwich", json!({ "lower": lower, "upper": upper }));
    Ok(rep)
}

fn distance_checks(rep: &mut Report, sa: &SpaceArg, r: &DistanceReport, tol: f64) -> Result<()> {
    let (fwd, back) = r.replay(&sa.space)?;
    let replayed = fwd * back;
    rep.check(
        (replayed - r.product).abs() <= 1e-9 * r.product.max(1.0),
        format!("{}: replayed product {replayed} differs from {}", sa.name, r.product),
    );
    rep.check(r.product >= 1.0 - tol, format!("{}: product {} below 1", sa.name, r.product));
    // Named models have explicit factorizations at or below the guaranteed distance.
    if sa.kind.is_some() {
        rep.check(r.product <= r.guarantee + tol, format!("{}: product {} above {}", sa.name, r.product, r.guarantee));
    }
    Ok(())
}

fn distance_row(name: &str, r: &DistanceReport) -> Vec<String> {
    vec![
        name.to_string(),
        r.n.to_string(),
        num(r.forward_upper),
        format!("{:?}", r.forward_kind).to_lowercase(),
        num(r.backward_exact),
        num(r.product),
        num(r.guarantee),
        r.route.clone(),
    ]
}

pub fn distance(cfg: &RunConfig, second: Option<&str>) -> Result<Report> {
    let sa = space_of(cfg, false)?;
    let opts = cfg.distance();
    let cols = vec!["space", "n", "forward", "forward_kind", "backward", "product", "guarantee", "route"];
    let mut rep = Report::new("distance", cols);
    rep.set("space", sa.describe());
    let Some(desc) = second else {
        let r = distance_to_oh(&sa.space, &opts)?;
        distance_checks(&mut rep, &sa, &r, cfg.tol)?;
        rep.row(distance_row(&sa.name, &r));
        rep.set("report", &r);
        return Ok(rep);
    };
    let sb = load_space(desc, cfg.n, false)?;
    if sb.space.dim() != sa.space.dim() {
        return input(format!("spaces have dimensions {} and {}", sa.space.dim(), sb.space.dim()));
    }
    let r = pairwise_distance(&sa.space, &sb.space, &opts)?;
    distance_checks(&mut rep, &sa, &r.first, cfg.tol)?;
    distance_checks(&mut rep, &sb, &r.second, cfg.tol)?;
    if sa.kind.is_some() && sb.kind.is_some() {
        rep.check(r.product <= r.guarantee + cfg.tol, format!("pairwise product {} above {}", r.product, r.guarantee));
    }
    rep.row(distance_row(&sa.name, &r.first));
    rep.row(distance_row(&sb.name, &r.second));
    let blank = String::new;
    rep.row(vec!["pairwise".into(), r.first.n.to_string(), blank(), blank(), blank(), num(r.product), num(r.guarantee), "oh".into()]);
    rep.set("second_space", sb.describe());
    rep.set("pairwise", &r);
    Ok(rep)
}

pub fn project(cfg: &RunConfig) -> Result<Report> {
    let sa = space_of(cfg, true)?;
    if sa.space.presentation().is_none() {
        return input("project needs a concrete space; the OH model has no matrix realization");
    }
    if cfg.level == 0 {
        return input("--level must be at least 1");
    }
    let cert = pi2oh_upper_certificate(&sa.space, &TargetMap::Identity, &CertificateOptions::default())?;
    let proj = project_onto(&sa.space, &cert.mixture)?;
    let search = SearchParams { restarts: cfg.restarts.unwrap_or(8), iterations: 800, seed: cfg.seed.unwrap_or(1), ..SearchParams::default() };
    let prof = cb_lower_matrix_map(&proj.map, cfg.level, &search)?;
    let guarantee = (sa.space.dim() as f64).sqrt();
    let mut rep = Report::new("project", vec!["level", "cb_lower", "guarantee"]);
    let residual = proj.inclusion_residual.max(proj.idempotence_residual);
    rep.check(residual <= 1e-10, format!("projection residual {residual:e}"));
    if sa.kind.is_some() {
        rep.check(prof.best() <= guarantee + cfg.tol, format!("cb lower bound {} above {guarantee}", prof.best()));
    }
    for (l, v) in prof.values.iter().enumerate() {
        rep.row(vec![(l + 1).to_string(), num(*v), num(guarantee)]);
    }
    rep.set("space", sa.describe());
    rep.set("certificate_constant", cert.constant);
    rep.set("projection", &proj);
    rep.set("amplification", &prof);
    rep.set("guarantee", guarantee);
    Ok(rep)
}
