use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lossycomp::hypergraph::{enumerate_gamma_d, epsilon_distortion, maximal_members};
use lossycomp::info::binary_entropy;
use lossycomp::model::{builtin, zero_rate_distortion};
use lossycomp::oracle::{verify_point, OracleConfig, RATE_TOLERANCE};
use lossycomp::simulator::{simulate_scheme, simulate_scheme_traced};
use lossycomp::solver::{lift_to_multihyperedge, solve_at_distortion, solve_lagrangian, sweep_curve, DEFAULT_SEED};
use lossycomp::{validate_spec, AlphabetMode, AtomLabel, EnumerationCaps, ProblemSpec, RDPoint, RawSpec, SolverConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::report::{csv_text, emit, emit_csv, sig9, structured, ManifestBuilder, Source};
use crate::{Alphabet, CliError, Format, OutputArgs, SolverArgs, SourceArgs};

const CURVE_HEADER: [&str; 5] = ["lambda", "distortion", "rate_bits", "support_size", "converged"];

const MAXIMAL_DISCLAIMER: &str =
    "maximal members only: a heuristic reduction, optimal schemes may also use non-maximal members";

fn load(source: &SourceArgs) -> Result<(ProblemSpec, ManifestBuilder)> {
    if let Some(name) = &source.builtin {
        let spec = builtin(name).ok_or_else(|| CliError::UnknownBuiltin(name.clone()))?;
        return Ok((spec, ManifestBuilder::start(Source::Builtin(name.clone()))));
    }
    let path = source.spec.clone().expect("clap requires --spec or --builtin");
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let raw = RawSpec::from_json(&text).map_err(|source| CliError::Parse {
        path: path.clone(),
        source,
    })?;
    let spec = validate_spec(&raw)?;
    Ok((spec, ManifestBuilder::start(Source::SpecFile(path))))
}

fn solver_config(args: &SolverArgs) -> SolverConfig {
    let d = SolverConfig::default();
    SolverConfig {
        tol_objective: args.tol.unwrap_or(d.tol_objective),
        max_iters: args.max_iters.unwrap_or(d.max_iters),
        restarts: args.restarts.unwrap_or(d.restarts),
        rng_seed: args.seed.unwrap_or(DEFAULT_SEED),
        ..d
    }
}

/// Shortest text that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn read_point(path: &Path) -> Result<RDPoint> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse = |source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    };
    let mut doc: Value = serde_json::from_str(&text).map_err(parse)?;
    let body = doc.get_mut("point").map(Value::take).unwrap_or(doc);
    Ok(serde_json::from_value(body).map_err(parse)?)
}

/// Display fields of a point; `point` keeps full precision for re-reading.
#[derive(Serialize)]
struct PointSummary {
    rate_bits: String,
    distortion: f64,
    lambda: Option<f64>,
    support_size: usize,
    converged: bool,
    iterations: usize,
}

fn summarize(spec: &ProblemSpec, p: &RDPoint) -> PointSummary {
    PointSummary {
        rate_bits: sig9(p.rate),
        distortion: p.distortion,
        lambda: p.lambda,
        support_size: p.support_size(spec),
        converged: p.converged,
        iterations: p.iterations,
    }
}

fn curve_row(spec: &ProblemSpec, p: &RDPoint) -> Vec<String> {
    vec![
        p.lambda.map_or(String::new(), num),
        num(p.distortion),
        sig9(p.rate),
        p.support_size(spec).to_string(),
        p.converged.to_string(),
    ]
}

pub fn validate(source: &SourceArgs) -> Result<()> {
    let (spec, _) = load(source)?;
    let doc = json!({
        "valid": true,
        "sizes": { "x": spec.nx(), "y": spec.ny(), "z": spec.nz(), "zhat": spec.nzhat() },
        "zero_rate_distortion": zero_rate_distortion(&spec),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn lifted(spec: &ProblemSpec, p: RDPoint) -> Result<RDPoint> {
    let channel = lift_to_multihyperedge(spec, &p.channel, &p.decoder)?;
    let decoder = channel.decoder()?;
    Ok(RDPoint { channel, decoder, ..p })
}

#[allow(clippy::too_many_arguments)]
pub fn solve(
    source: &SourceArgs,
    distortion: Option<f64>,
    lambda: Option<f64>,
    alphabet: Alphabet,
    epsilon: Option<f64>,
    lift: bool,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<()> {
    let (spec, manifest) = load(source)?;
    let cfg = solver_config(solver);
    let point = match (alphabet, distortion, lambda) {
        (Alphabet::Recoveries, Some(d), _) => solve_at_distortion(&spec, d, &cfg)?,
        (Alphabet::Recoveries, None, Some(l)) => {
            solve_lagrangian(&spec, &cfg.with_lambda(l), AlphabetMode::Recoveries)?
        }
        (Alphabet::Recoveries, None, None) => {
            return Err(CliError::Usage("solve needs --distortion or --lambda".into()).into())
        }
        (Alphabet::GammaD, ..) => solve_lagrangian(&spec, &cfg, AlphabetMode::GammaD)?,
        (Alphabet::GammaEps, ..) => {
            let eps = epsilon.ok_or_else(|| CliError::Usage("--alphabet gamma-eps needs --epsilon".into()))?;
            solve_lagrangian(&spec, &cfg, AlphabetMode::GammaEps(eps))?
        }
    };
    let point = if lift { lifted(&spec, point)? } else { point };
    let manifest = manifest.finish(cfg, vec![cfg.rng_seed]);
    match output.format.unwrap_or(Format::Structured) {
        Format::Structured => {
            let body = json!({ "summary": summarize(&spec, &point), "point": point });
            let mut doc = serde_json::to_value(&body)?;
            doc["manifest"] = serde_json::to_value(&manifest)?;
            emit(output.output.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
        }
        Format::Csv => emit_csv(
            output.output.as_deref(),
            &csv_text(&CURVE_HEADER, &[curve_row(&spec, &point)])?,
            &manifest,
        ),
    }
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("--lambda-grid expects MIN:MAX:N[:log], got {grid:?}"));
    let parts: Vec<&str> = grid.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(bad().into());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(_) => return Err(bad().into()),
    };
    if n == 0 || lo.is_nan() || hi.is_nan() || lo > hi || (log && lo <= 0.0) {
        return Err(bad().into());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect())
}

/// `lambda = 0` and `k - 1` multipliers geometric over four decades, scaled
/// by the largest distortion value.
fn auto_grid(spec: &ProblemSpec, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(CliError::Usage("--points must be >= 1".into()).into());
    }
    let scale = 1.0 / spec.dist().max_entry().max(f64::MIN_POSITIVE);
    let mut grid = vec![0.0];
    let m = k - 1;
    for i in 0..m {
        let t = if m == 1 { 0.5 } else { i as f64 / (m - 1) as f64 };
        grid.push(scale * 10f64.powf(-1.0 + 4.0 * t));
    }
    Ok(grid)
}

pub fn curve(
    source: &SourceArgs,
    lambda_grid: Option<&str>,
    points: Option<usize>,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<()> {
    let (spec, manifest) = load(source)?;
    let cfg = solver_config(solver);
    let lambdas = match (lambda_grid, points) {
        (Some(g), _) => parse_grid(g)?,
        (None, Some(k)) => auto_grid(&spec, k)?,
        (None, None) => unreachable!("clap requires one of the grids"),
    };
    let curve = sweep_curve(&spec, &lambdas, &cfg)?;
    let manifest = manifest.finish(json!({ "solver": cfg, "lambdas": lambdas }), vec![cfg.rng_seed]);
    match output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = curve.points.iter().map(|p| curve_row(&spec, p)).collect();
            for (lambda, e) in &curve.failures {
                rows.push(vec![
                    num(*lambda),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed:{}", e.code()),
                ]);
            }
            emit_csv(output.output.as_deref(), &csv_text(&CURVE_HEADER, &rows)?, &manifest)?;
        }
        Format::Structured => {
            let failures: Vec<Value> = curve
                .failures
                .iter()
                .map(|(l, e)| json!({ "lambda": l, "error": e.code(), "message": e.to_string() }))
                .collect();
            let body = json!({
                "points": curve.points.iter().map(|p| summarize(&spec, p)).collect::<Vec<_>>(),
                "failures": failures,
            });
            emit(output.output.as_deref(), &structured(&manifest, "curve", body)?)?;
        }
    }
    match curve.failures.into_iter().next() {
        Some((_, e)) if curve.points.is_empty() => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn gamma(source: &SourceArgs, epsilon: Option<f64>, maximal: bool, output: &OutputArgs) -> Result<()> {
    let (spec, manifest) = load(source)?;
    let family_spec = match epsilon {
        Some(eps) => spec.with_distortion(epsilon_distortion(&spec, eps)?)?,
        None => spec.clone(),
    };
    let caps = EnumerationCaps::default();
    let mut family = enumerate_gamma_d(&family_spec, &caps)?;
    if maximal {
        family = maximal_members(&family);
    }
    let shown: Vec<String> = family.iter().map(|w| w.display(&spec).to_string()).collect();
    let manifest = manifest.finish(json!({ "epsilon": epsilon, "maximal": maximal, "caps": caps }), vec![]);
    match output.format {
        None => {
            let mut text = String::new();
            if maximal {
                text.push_str(&format!("# {MAXIMAL_DISCLAIMER}\n"));
            }
            for s in &shown {
                text.push_str(s);
                text.push('\n');
            }
            emit(output.output.as_deref(), &text)
        }
        Some(Format::Csv) => {
            let rows: Vec<Vec<String>> = shown.into_iter().map(|s| vec![s]).collect();
            emit_csv(output.output.as_deref(), &csv_text(&["member"], &rows)?, &manifest)
        }
        Some(Format::Structured) => {
            let members: Vec<Vec<&str>> = family
                .iter()
                .map(|w| w.members().iter().map(|&x| spec.x_alphabet().label(x)).collect())
                .collect();
            let body = json!({
                "members": members,
                "maximal_only": maximal,
                "note": maximal.then_some(MAXIMAL_DISCLAIMER),
            });
            emit(output.output.as_deref(), &structured(&manifest, "family", body)?)
        }
    }
}

pub fn oracle(
    source: &SourceArgs,
    distortion: Option<f64>,
    point: Option<&Path>,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<()> {
    let (spec, manifest) = load(source)?;
    let cfg = solver_config(solver);
    let point = match (point, distortion) {
        (Some(p), _) => read_point(p)?,
        (None, Some(d)) => solve_at_distortion(&spec, d, &cfg)?,
        (None, None) => unreachable!("clap requires --point or --distortion"),
    };
    let ocfg = OracleConfig::default();
    let report = verify_point(&spec, &point, &ocfg)?;
    let manifest = manifest.finish(
        json!({ "solver": cfg, "oracle": ocfg }),
        vec![cfg.rng_seed, ocfg.rng_seed],
    );
    match output.format.unwrap_or(Format::Structured) {
        Format::Structured => emit(
            output.output.as_deref(),
            &structured(&manifest, "verification", &report)?,
        )?,
        Format::Csv => {
            let header = [
                "achieved_distortion",
                "solver_rate_bits",
                "oracle_rate_bits",
                "gap",
                "passed",
            ];
            let row = vec![
                num(report.achieved_distortion),
                sig9(report.solver_rate),
                sig9(report.oracle_rate),
                num(report.gap),
                report.passed.to_string(),
            ];
            emit_csv(output.output.as_deref(), &csv_text(&header, &[row])?, &manifest)?;
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "solver {} vs oracle {} bits (tolerance {RATE_TOLERANCE})",
            sig9(report.solver_rate),
            sig9(report.oracle_rate)
        ))
        .into())
    }
}

pub enum ChannelSource {
    Distortion(f64),
    ZeroDistortion,
    Point { path: PathBuf, lift: bool },
}

impl ChannelSource {
    pub fn pick(distortion: Option<f64>, zero: bool, point: Option<PathBuf>, lift: bool) -> Result<Self> {
        match (distortion, zero, point) {
            (Some(d), false, None) => Ok(Self::Distortion(d)),
            (None, true, None) => Ok(Self::ZeroDistortion),
            (None, false, Some(path)) => Ok(Self::Point { path, lift }),
            _ => Err(
                CliError::Usage("simulate needs exactly one of --distortion, --zero-distortion, --point".into()).into(),
            ),
        }
    }
}

pub fn simulate(
    source: &SourceArgs,
    channel: ChannelSource,
    samples: usize,
    trace: Option<&Path>,
    solver: &SolverArgs,
    output: &OutputArgs,
) -> Result<()> {
    let (spec, manifest) = load(source)?;
    let cfg = solver_config(solver);
    let point = match channel {
        ChannelSource::Distortion(d) => lifted(&spec, solve_at_distortion(&spec, d, &cfg)?)?,
        ChannelSource::ZeroDistortion => solve_lagrangian(&spec, &cfg, AlphabetMode::GammaD)?,
        ChannelSource::Point { path, lift } => {
            let p = read_point(&path)?;
            if lift {
                lifted(&spec, p)?
            } else {
                p
            }
        }
    };
    let seed = cfg.rng_seed;
    let report = match trace {
        None => simulate_scheme(&spec, &point.channel, samples, seed)?,
        Some(path) => {
            let file = File::create(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            let report = simulate_scheme_traced(&spec, &point.channel, samples, seed, &mut w)?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
            report
        }
    };
    let manifest = manifest.finish(json!({ "solver": cfg, "samples": samples }), vec![seed]);
    match output.format.unwrap_or(Format::Structured) {
        Format::Structured => emit(output.output.as_deref(), &structured(&manifest, "simulation", &report)?),
        Format::Csv => {
            let header = ["n", "empirical_distortion", "target_distortion", "std_error"];
            let row = vec![
                report.n.to_string(),
                num(report.empirical_distortion),
                num(report.target_distortion),
                report.std_error.map_or(String::new(), num),
            ];
            emit_csv(output.output.as_deref(), &csv_text(&header, &[row])?, &manifest)
        }
    }
}

fn card_closed_form(d: f64) -> Result<f64> {
    Ok(2.0 / 3.0 * (binary_entropy((1.0 + 6.0 * d) / 4.0)? - binary_entropy(3.0 * d)?))
}

/// Atoms below this mass are treated as unconverged residue.
const RESIDUAL_MASS: f64 = 1e-6;

/// `(1/6)(1 - p1 + p3)` when the lifted channel carries only the two atoms
/// `({1,2,3}, (1,0,0))` and `({1,2,3}, (1,1,0))`, with `p_x` the
/// probability of the first given card `x`.
fn optimizer_relation(spec: &ProblemSpec, p: &RDPoint) -> Result<Option<f64>> {
    let lifted = lift_to_multihyperedge(spec, &p.channel, &p.decoder)?;
    let mass = lifted.atom_mass(spec);
    let carried: Vec<usize> = (0..lifted.num_atoms()).filter(|&u| mass[u] > RESIDUAL_MASS).collect();
    if carried.len() != 2 {
        return Ok(None);
    }
    let find = |rec: [usize; 3]| {
        carried.iter().copied().find(|&u| match lifted.label(u) {
            AtomLabel::Hyperedge(m) => m.edge.members() == [0, 1, 2] && m.recovery.0 == rec,
            _ => false,
        })
    };
    Ok(match (find([1, 0, 0]), find([1, 1, 0])) {
        (Some(a), Some(_)) => Some((1.0 - lifted.prob(a, 0) + lifted.prob(a, 2)) / 6.0),
        _ => None,
    })
}

#[derive(Serialize)]
struct CardRow {
    distortion: f64,
    closed_form_bits: String,
    solver_bits: String,
    gap: f64,
    optimizer_relation: Option<f64>,
}

pub fn card_game(check: bool, points: usize, solver: &SolverArgs, output: &OutputArgs) -> Result<()> {
    if points < 2 {
        return Err(CliError::Usage("--points must be >= 2".into()).into());
    }
    let spec = builtin("card-game").expect("card-game is built in");
    let manifest = ManifestBuilder::start(Source::Builtin("card-game".into()));
    let cfg = solver_config(solver);
    let mut rows = Vec::new();
    let mut max_gap: f64 = 0.0;
    for i in 0..points {
        let d = i as f64 / (6.0 * (points - 1) as f64);
        let point = solve_at_distortion(&spec, d, &cfg)?;
        let reference = card_closed_form(d)?;
        let gap = (point.rate - reference).abs();
        max_gap = max_gap.max(gap);
        rows.push(CardRow {
            distortion: d,
            closed_form_bits: sig9(reference),
            solver_bits: sig9(point.rate),
            gap,
            optimizer_relation: optimizer_relation(&spec, &point)?,
        });
    }
    let manifest = manifest.finish(json!({ "solver": cfg, "points": points }), vec![cfg.rng_seed]);
    match output.format {
        None => {
            let mut text = format!(
                "{:>12} {:>14} {:>14} {:>10} {:>18}\n",
                "D", "closed_form", "solver", "gap", "(1-p1+p3)/6"
            );
            for r in &rows {
                let relation = r.optimizer_relation.map_or("n/a".to_string(), |v| format!("{v:.9}"));
                text.push_str(&format!(
                    "{:>12.9} {:>14} {:>14} {:>10.2e} {:>18}\n",
                    r.distortion, r.closed_form_bits, r.solver_bits, r.gap, relation
                ));
            }
            text.push_str(&format!("max gap {max_gap:.3e} bits\n"));
            emit(output.output.as_deref(), &text)?;
        }
        Some(Format::Csv) => {
            let header = [
                "distortion",
                "closed_form_bits",
                "solver_bits",
                "gap",
                "optimizer_relation",
            ];
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.distortion),
                        r.closed_form_bits.clone(),
                        r.solver_bits.clone(),
                        num(r.gap),
                        r.optimizer_relation.map_or(String::new(), num),
                    ]
                })
                .collect();
            emit_csv(output.output.as_deref(), &csv_text(&header, &table)?, &manifest)?;
        }
        Some(Format::Structured) => {
            let body = json!({ "rows": rows, "max_gap": max_gap, "tolerance": RATE_TOLERANCE });
            emit(output.output.as_deref(), &structured(&manifest, "card_game", body)?)?;
        }
    }
    if check && max_gap > RATE_TOLERANCE {
        return Err(CliError::CheckFailed(format!("max gap {max_gap:.3e} bits exceeds {RATE_TOLERANCE}")).into());
    }
    Ok(())
}
