//! Command-line front end. Every command writes a JSON report that embeds the
//! resolved configuration, and maps its outcome to an exit code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::escape::{kb_average, search_certificate, verify_certificate, Search, DEFAULT_SAMPLES};
use crate::exec::{set_threads, Exec};
use crate::geometry::{BoxSet, IntervalSet};
use crate::linearize::linearize_on;
use crate::maps::{map_from_json, patched_to_json, CircleMap, MapSpec, PatchedMap};
use crate::pipeline::{rotation_demo, run, PipelineConfig};
use crate::rokhlin::{build_tower, BaseChoice, TowerParams};
use crate::scalar::{self, Scalar};
use crate::slicing::{normalize_sequence, plan, random_sequence, sequence_from_json, sequence_to_json, verify_shrink};

pub const OUT_DIR_ENV: &str = "NOACIM_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "noacim", version, about = "Perturbing circle maps until almost all mass escapes")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory for reports.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cap on interval components held by any one set.
    #[arg(long, global = true, default_value_t = 1 << 20)]
    pub cap: usize,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Rokhlin tower over first-visit sets.
    Tower(TowerArgs),
    /// Compressors for a chain of linear maps, checked by sampling.
    SliceVerify(SliceArgs),
    /// Make a map affine on most of the circle.
    Linearize(LinearizeArgs),
    /// Verify or search for an escape certificate; write density CSVs.
    Escape(EscapeArgs),
    /// The full construction on the circle.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct TowerArgs {
    /// Map spec: a JSON file, or one of doubling, tripling, rotation:P/Q, surrogate:EPS.
    #[arg(long)]
    pub map: String,
    #[arg(long)]
    pub n0: usize,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub eps0: String,
    /// First-visit truncation depth.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    /// Base: `search`, `claims:N:EPS:DEPTH`, or `LO,HI` for a given arc.
    #[arg(long, default_value = "search")]
    pub base: String,
}

#[derive(Args, Debug)]
pub struct SliceArgs {
    /// JSON file with a list of square matrices; a random sequence when absent.
    #[arg(long)]
    pub sequence: Option<PathBuf>,
    #[arg(long, default_value = "3/10")]
    pub eps: String,
    #[arg(long, default_value = "2/5")]
    pub delta: String,
    /// Dimension and length of a random sequence (length 0 means n + 5).
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub len: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct LinearizeArgs {
    #[arg(long)]
    pub map: String,
    #[arg(long, default_value = "1/5")]
    pub gamma: String,
    #[arg(long, default_value = "1/1000")]
    pub r0: String,
    /// Bump ramp; must be below gamma / 2.
    #[arg(long, default_value = "1/20")]
    pub delta: String,
}

#[derive(Args, Debug)]
pub struct EscapeArgs {
    #[arg(long)]
    pub map: String,
    #[arg(long, default_value = "1/10")]
    pub eps: String,
    /// Certificate JSON with fields K and N; search when absent.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    /// Largest time tried by the search, and horizon of the density average.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long, default_value_t = 1 << 12)]
    pub grid: usize,
    /// Candidate sets examined by the search.
    #[arg(long, default_value_t = 64)]
    pub budget: usize,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Map spec as for `tower`; omit with `--rotation-demo`.
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long, default_value = "1/10")]
    pub eps: String,
    #[arg(long, default_value = "8")]
    pub c1_budget: String,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Run on a rational rotation with a tower base on its period grid.
    #[arg(long)]
    pub rotation_demo: bool,
}

fn parse(s: &str, what: &str) -> Result<Scalar> {
    scalar::parse(s).map_err(|e| Error::input(format!("--{what}: {e}")))
}

/// A built-in name or a JSON file.
pub fn load_map(spec: &str) -> Result<MapSpec> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(Error::input("empty map spec"));
    }
    let builtin = match spec.split_once(':') {
        None => match spec {
            "doubling" => Some(CircleMap::doubling()),
            "tripling" => Some(CircleMap::tripling()),
            "identity" => Some(CircleMap::identity()),
            _ => None,
        },
        Some(("rotation", a)) => Some(CircleMap::rotation(parse(a, "map")?)?),
        Some(("surrogate", e)) => Some(CircleMap::doubling_with_sine_surrogate(parse(e, "map")?)),
        Some(_) => None,
    };
    if let Some(f) = builtin {
        return Ok(MapSpec::Circle(f));
    }
    let text = fs::read_to_string(spec).map_err(|e| Error::input(format!("cannot read map spec {spec}: {e}")))?;
    if text.trim().is_empty() {
        return Err(Error::input(format!("map spec {spec} is empty")));
    }
    map_from_json(&serde_json::from_str(&text)?)
}

fn circle(spec: &str) -> Result<CircleMap> {
    match load_map(spec)? {
        MapSpec::Circle(f) => Ok(f),
        MapSpec::Patched(_) => Err(Error::input("this command takes an unpatched map")),
    }
}

fn parse_base(s: &str) -> Result<BaseChoice> {
    if s == "search" {
        return Ok(BaseChoice::Search);
    }
    if let Some(rest) = s.strip_prefix("claims:") {
        let f: Vec<&str> = rest.split(':').collect();
        if let [n, eps, depth] = f.as_slice() {
            let n = n.parse().map_err(|_| Error::input("--base claims: bad N"))?;
            let depth = depth.parse().map_err(|_| Error::input("--base claims: bad depth"))?;
            return Ok(BaseChoice::Claims { n, eps: parse(eps, "base")?, depth });
        }
        return Err(Error::input("--base claims takes N:EPS:DEPTH"));
    }
    if let Some((a, b)) = s.split_once(',') {
        let (a, b) = (parse(a, "base")?, parse(b, "base")?);
        if a >= b {
            return Err(Error::input("--base arc needs LO < HI"));
        }
        return Ok(BaseChoice::Given(IntervalSet::interval(a, b)));
    }
    Err(Error::input(format!("unknown base {s}")))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<PathBuf> {
    write(dir, name, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn exec_of(c: &Common) -> Exec {
    if c.threads == Some(1) {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn common_json(c: &Common) -> Value {
    json!({ "out": c.out.display().to_string(), "threads": c.threads, "seed": c.seed, "cap": c.cap })
}

/// Outcome of a command: a report path and whether every check passed.
pub struct Outcome {
    pub report: PathBuf,
    pub pass: bool,
    pub witness: Option<String>,
}

pub fn cmd_tower(c: &Common, a: &TowerArgs) -> Result<Outcome> {
    let f = circle(&a.map)?;
    let params = TowerParams { n0: a.n0, l: a.l, eps0: parse(&a.eps0, "eps0")?, depth: a.depth, cap: c.cap };
    let base = parse_base(&a.base)?;
    let t = build_tower(&f, &params, &base)?;
    let mut report = t.to_json();
    report["config"] = json!({ "common": common_json(c), "map": a.map, "n0": a.n0, "l": a.l, "eps0": a.eps0, "depth": a.depth, "base": a.base });
    let path = write_json(&c.out, "tower.json", &report)?;
    Ok(Outcome { report: path, pass: t.holds(), witness: (!t.holds()).then(|| t.failures.join("; ")) })
}

pub fn cmd_slice_verify(c: &Common, a: &SliceArgs) -> Result<Outcome> {
    let eps = parse(&a.eps, "eps")?;
    let delta = parse(&a.delta, "delta")?;
    let ls = match &a.sequence {
        Some(p) => sequence_from_json(&serde_json::from_str(&fs::read_to_string(p)?)?)?,
        None => {
            let k = crate::slicing::compute_k(&eps, &delta);
            let len = if a.len == 0 { k + 5 } else { a.len };
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            random_sequence(&mut rng, a.dim, len, 2, 10.0)
        }
    };
    let seq = normalize_sequence(&ls)?;
    let p = plan(&seq, &eps, &delta)?;
    let mut verdicts = Vec::new();
    let mut bad = None;
    for i in p.k..=p.n.min(seq.len()) {
        let v = verify_shrink(&seq, &p, i, a.samples, c.seed.wrapping_add(i as u64), exec_of(c))?;
        if !v.ok && bad.is_none() {
            bad = Some(format!("shrink fails at i = {i}: {}", v.to_json()["witness"]));
        }
        verdicts.push(v.to_json());
    }
    let report = json!({
        "config": { "common": common_json(c), "eps": a.eps, "delta": a.delta, "samples": a.samples, "dim": a.dim, "len": a.len },
        "sequence": sequence_to_json(&ls),
        "plan": p.to_json(),
        "verdicts": verdicts,
        "pass": bad.is_none(),
    });
    let path = write_json(&c.out, "slicing.json", &report)?;
    Ok(Outcome { report: path, pass: bad.is_none(), witness: bad })
}

pub fn cmd_linearize(c: &Common, a: &LinearizeArgs) -> Result<Outcome> {
    let f = circle(&a.map)?;
    let gamma = parse(&a.gamma, "gamma")?;
    let l = linearize_on(&f, &BoxSet::unit(1), &gamma, &parse(&a.r0, "r0")?, &parse(&a.delta, "delta")?)?;
    let floor = scalar::one() - &gamma;
    let pass = l.ratio > floor;
    let mut report = l.to_json();
    report["config"] = json!({ "common": common_json(c), "map": a.map, "gamma": a.gamma, "r0": a.r0, "delta": a.delta });
    report["map"] = patched_to_json(&l.map);
    report["V"] = l.v.to_json();
    let path = write_json(&c.out, "linearize.json", &report)?;
    Ok(Outcome { report: path, pass, witness: (!pass).then(|| "m(V)/m(U) is not above 1 - gamma".to_string()) })
}

pub fn cmd_escape(c: &Common, a: &EscapeArgs) -> Result<Outcome> {
    let g: PatchedMap = load_map(&a.map)?.into_patched();
    let eps = parse(&a.eps, "eps")?;
    let exec = exec_of(c);
    let verdict = match &a.certificate {
        Some(p) => {
            let v: Value = serde_json::from_str(&fs::read_to_string(p)?)?;
            let k = BoxSet::from_json(v.get("K").ok_or_else(|| Error::input("certificate needs a field K"))?)?;
            let n = v.get("N").and_then(Value::as_u64).ok_or_else(|| Error::input("certificate needs an integer field N"))?;
            Some(verify_certificate(&g, &k, n as usize, &eps)?)
        }
        None => match search_certificate(&g, &eps, a.depth, a.budget, a.grid, exec)? {
            Search::Found(v) => Some(v),
            Search::Exhausted { best, .. } => best,
        },
    };
    let avg = kb_average(&g, a.depth, a.grid, DEFAULT_SAMPLES, exec);
    write(&c.out, "density.csv", &avg.density_csv())?;
    write(&c.out, "profile.csv", &avg.profile_csv(&[0.25, 0.5, 0.75, 0.9]))?;
    let pass = verdict.as_ref().is_some_and(|v| v.pass);
    let witness = match &verdict {
        Some(v) => v.witness.clone(),
        None => Some("no candidate certificate".into()),
    };
    let report = json!({
        "config": { "common": common_json(c), "map": a.map, "eps": a.eps, "depth": a.depth, "grid": a.grid, "budget": a.budget,
                    "certificate": a.certificate.as_ref().map(|p| p.display().to_string()) },
        "verdict": verdict.as_ref().map(|v| v.to_json()),
        "searched": a.certificate.is_none(),
        "density_l1_from_uniform": avg.l1_from_uniform(),
        "pass": pass,
    });
    let path = write_json(&c.out, "certificate.json", &report)?;
    Ok(Outcome { report: path, pass, witness })
}

pub fn cmd_pipeline(c: &Common, a: &PipelineArgs) -> Result<Outcome> {
    let eps = parse(&a.eps, "eps")?;
    let budget = parse(&a.c1_budget, "c1-budget")?;
    let (f, mut cfg) = if a.rotation_demo {
        rotation_demo(&eps, &budget)?
    } else {
        let spec = a.map.as_deref().ok_or_else(|| Error::input("--map is required without --rotation-demo"))?;
        let mut cfg = PipelineConfig::new(eps);
        cfg.c1_budget = budget;
        (circle(spec)?, cfg)
    };
    if a.depth.is_some() {
        cfg.depth = a.depth;
    }
    cfg.cap = c.cap;
    cfg.exec = exec_of(c);
    let r = run(&f, &cfg)?;
    let mut report = r.to_json();
    report["config"] = json!({
        "common": common_json(c), "map": a.map, "rotation_demo": a.rotation_demo, "eps": a.eps,
        "c1_budget": a.c1_budget, "depth": cfg.depth, "base_map": crate::maps::map_to_json(&f),
    });
    let path = write_json(&c.out, "pipeline.json", &report)?;
    Ok(Outcome { report: path, pass: r.holds(), witness: (!r.holds()).then(|| r.failures.join("; ")) })
}

/// Runs the parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(t) = cli.common.threads {
        set_threads(t.max(1));
    }
    let c = &cli.common;
    let out = match &cli.cmd {
        Cmd::Tower(a) => cmd_tower(c, a),
        Cmd::SliceVerify(a) => cmd_slice_verify(c, a),
        Cmd::Linearize(a) => cmd_linearize(c, a),
        Cmd::Escape(a) => cmd_escape(c, a),
        Cmd::Pipeline(a) => cmd_pipeline(c, a),
    };
    match out {
        Ok(o) if o.pass => {
            println!("{}", o.report.display());
            0
        }
        Ok(o) => {
            println!("{}", o.report.display());
            eprintln!("verification failed: {}", o.witness.unwrap_or_default());
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
