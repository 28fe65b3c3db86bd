//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::chain::{stationarity_residual, stationary, Chain};
use crate::error::{Error, Result};
use crate::io::{read_chain_spec, write_chain_spec, PartitionSpec};
use crate::models::parse_model;
use crate::partition::Partition;
use crate::pathsim::{
    estimate_91, estimate_t2, fdd_compare, last_passage_path, occupation_time, project, project_by,
    run_trials, simulate_with, stream_index, trace_path, Path, Projection, Sampler, Start,
};
use crate::random::rng;
use crate::reduction::{
    check_conditions, coarse_rates, jump_probabilities, reference_state, timescales,
};
use crate::report::{fingerprint, InputInfo, Report};
use crate::tolerance::{config, rel_dev};
use crate::transforms::cycle_decompose;
use crate::uniformization::integrated_transient;

#[derive(Debug, Parser)]
#[command(
    name = "metastab",
    version,
    about = "Metastable model reduction for finite Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Model string such as `glued_cubes:d=2,N=8,ell=2`.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub model: Option<String>,
    /// Chain-spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Partition JSON file, overriding any inline or model partition.
    #[arg(long)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Surgery {
    None,
    Trace,
    #[value(name = "last_passage")]
    LastPassage,
}

impl Surgery {
    fn name(self) -> &'static str {
        match self {
            Surgery::None => "none",
            Surgery::Trace => "trace",
            Surgery::LastPassage => "last_passage",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduced model, time scales and condition ratios.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        theta: Option<f64>,
        /// Report file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate trajectories and write one CSV per trial.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        /// Label of the initial state.
        #[arg(long)]
        start: String,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Surgery::None)]
        surgery: Surgery,
        /// Output directory for the CSV files and `summary.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo validation of the reduced model.
    Validate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        theta: Option<f64>,
        /// Comma-separated rescaled times.
        #[arg(long, default_value = "0.5,1,2")]
        grid: String,
        /// Rescaled horizon of the separating-set occupation estimate; the largest grid
        /// time when absent.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cycle decomposition of the generator.
    Cycles {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Loaded {
    chain: Chain,
    pi: Vec<f64>,
    partition: Option<Partition>,
    suggested_theta: Option<f64>,
    family: Option<String>,
    info: InputInfo,
    fingerprint: String,
}

impl Loaded {
    fn partition(&self) -> Result<&Partition> {
        self.partition
            .as_ref()
            .ok_or_else(|| Error::Input("partition required".into()))
    }

    fn report(&self, command: &str) -> Report {
        Report::new(command, self.info.clone(), self.fingerprint.clone())
    }
}

fn read(path: &FsPath) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &FsPath, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let (chain, pi, mut partition, suggested_theta, family, info) =
        match (&input.model, &input.spec) {
            (Some(m), _) => {
                let model = parse_model(m)?;
                let info = InputInfo {
                    kind: "model".into(),
                    source: m.clone(),
                    partition: None,
                };
                let pi = model.pi.into_inner();
                (
                    model.chain,
                    pi,
                    Some(model.partition),
                    model.suggested_theta,
                    Some(model.family),
                    info,
                )
            }
            (None, Some(path)) => {
                let (chain, partition) = read_chain_spec(&read(path)?)?;
                let pi = stationary(&chain)?.into_inner();
                let info = InputInfo {
                    kind: "spec".into(),
                    source: path.display().to_string(),
                    partition: None,
                };
                (chain, pi, partition, None, None, info)
            }
            (None, None) => {
                return Err(Error::Input("one of --model or --spec is required".into()))
            }
        };
    let mut info = info;
    if let Some(path) = &input.partition {
        partition = Some(PartitionSpec::parse(&read(path)?)?.build(&chain)?);
        info.partition = Some(path.display().to_string());
    }
    let fingerprint = fingerprint(&write_chain_spec(&chain, partition.as_ref()));
    Ok(Loaded {
        chain,
        pi,
        partition,
        suggested_theta,
        family,
        info,
        fingerprint,
    })
}

fn emit(report: &Report, out: Option<&FsPath>) -> Result<String> {
    let text = report.to_json();
    if let Some(path) = out {
        write(path, &text)?;
    }
    Ok(text)
}

/// Matrix with the unused diagonal written as `null`.
fn off_diagonal(m: &[Vec<f64>]) -> Value {
    Value::Array(
        m.iter()
            .enumerate()
            .map(|(j, row)| {
                Value::Array(
                    row.iter()
                        .enumerate()
                        .map(|(k, &v)| if j == k { Value::Null } else { json!(v) })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn analyze(input: &InputArgs, theta: Option<f64>, out: Option<&FsPath>) -> Result<String> {
    let l = load(input)?;
    let partition = l.partition()?;
    partition.require_reducible()?;
    let (chain, pi) = (&l.chain, &l.pi[..]);
    let model = coarse_rates(chain, pi, partition, theta)?;
    let scales = timescales(chain, pi, partition)?;
    let n = model.valley_count;

    let mut probs = Vec::with_capacity(n);
    let mut route_deviation: f64 = 0.0;
    for j in 0..n {
        let p = jump_probabilities(chain, pi, partition, j)?;
        for k in 0..n {
            if k != j {
                route_deviation =
                    route_deviation.max(rel_dev(model.rates[j][k], model.holding_rates[j] * p[k]));
            }
        }
        probs.push(p);
    }

    let mut report = l.report("analyze");
    let states: Map<String, Value> = (0..chain.len())
        .map(|i| (chain.label(i).to_string(), json!(pi[i])))
        .collect();
    report.section(
        "stationary",
        json!({"states": states, "residual": stationarity_residual(chain, pi)}),
    );
    let capacities: Vec<Value> = (0..n)
        .map(|j| {
            json!({
                "valley": j + 1,
                "size": partition.valley(j).len(),
                "mass": model.valley_mass[j],
                "capacity": model.capacities[j],
                "timescale": scales.values[j],
            })
        })
        .collect();
    report.section("capacities", Value::Array(capacities));

    let mut reduced = json!({
        "theta": model.theta,
        "theta_source": if theta.is_some() { "user" } else { "default" },
        "suggested_theta": l.suggested_theta,
        "valleys": partition.valley_labels(chain),
        "delta": partition.delta_labels(chain),
        "rates": off_diagonal(&model.rates),
        "holding_rates": model.holding_rates,
        "jump_probabilities": off_diagonal(&probs),
        "timescale_spread": scales.spread,
        "identity": {
            "deviation": model.identity_deviation,
            "tolerance": config().identity,
            "check": if model.identity_holds() { "pass" } else { "fail" },
        },
        "route_deviation": route_deviation,
    });
    if l.family.as_deref() == Some("glued_cubes") && n == 4 {
        let adjacent: Vec<f64> = (0..4)
            .flat_map(|j| [model.rates[j][(j + 1) % 4], model.rates[j][(j + 3) % 4]])
            .collect();
        let hi = adjacent.iter().copied().fold(0.0, f64::max);
        let lo = adjacent.iter().copied().fold(f64::INFINITY, f64::min);
        let opposite = (0..4).map(|j| probs[j][(j + 2) % 4]).fold(0.0, f64::max);
        reduced["symmetry"] = json!({
            "adjacent_rate_spread": if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
            "opposite_probability": opposite,
        });
    }
    report.section("reduced_model", reduced);
    let conditions = check_conditions(chain, pi, partition, model.theta)?;
    report.section(
        "conditions",
        serde_json::to_value(&conditions).expect("serializable"),
    );
    emit(&report, out)
}

fn cycles(input: &InputArgs, out: Option<&FsPath>) -> Result<String> {
    let l = load(input)?;
    let d = cycle_decompose(&l.chain, &l.pi)?;
    let mut report = l.report("cycles");
    report.section("cycles", d.to_json(&l.chain));
    emit(&report, out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn coarse_jump_counts(coarse: &Path, n: usize) -> Vec<Vec<f64>> {
    let mut counts = vec![vec![0.0; n]; n];
    let mut last = coarse.start;
    for &(_, s) in &coarse.jumps {
        if last > 0 && s > 0 && s != last {
            counts[last - 1][s - 1] += 1.0;
        }
        last = s;
    }
    counts
}

struct SimArgs<'a> {
    start: &'a str,
    horizon: f64,
    trials: usize,
    seed: u64,
    jobs: usize,
    surgery: Surgery,
    out: &'a FsPath,
}

fn simulate_cmd(input: &InputArgs, a: &SimArgs<'_>) -> Result<String> {
    let l = load(input)?;
    let chain = &l.chain;
    let start = chain
        .index_of(a.start)
        .ok_or_else(|| Error::UnknownState(a.start.to_string()))?;
    if !(a.horizon > 0.0) || !a.horizon.is_finite() {
        return Err(Error::Input(format!(
            "horizon must be positive, got {}",
            a.horizon
        )));
    }
    if a.trials == 0 {
        return Err(Error::Input("trials must be positive".into()));
    }
    let partition = match a.surgery {
        Surgery::None => l.partition.as_ref(),
        _ => Some(l.partition()?),
    };
    if a.surgery == Surgery::LastPassage && partition.is_some_and(|p| p.valley_of(start).is_none())
    {
        return Err(Error::StartsInDelta);
    }
    fs::create_dir_all(a.out)
        .map_err(|e| Error::Input(format!("cannot create {}: {e}", a.out.display())))?;

    let results = run_trials(a.trials, a.jobs, |trial| -> Result<(String, Value)> {
        let mut r = rng(a.seed, stream_index(0, trial));
        let path = simulate_with(chain, Start::State(start), a.horizon, &mut r)?;
        let csv = match (a.surgery, partition) {
            (Surgery::None, _) | (_, None) => path.to_csv(|i| csv_field(chain.label(i))),
            (Surgery::Trace, Some(p)) => {
                let traced = trace_path(&path, |i| p.valley_of(i).is_some())?;
                project(&traced, p, Projection::Phi)?.to_csv(|s| s.to_string())
            }
            (Surgery::LastPassage, Some(p)) => {
                last_passage_path(&project(&path, p, Projection::Phi)?)?.to_csv(|s| s.to_string())
            }
        };
        let mut occupation = Map::new();
        let coarse_jumps = match partition {
            Some(p) => {
                for j in 0..p.valley_count() {
                    let occ = occupation_time(&path, |i| p.valley_of(i) == Some(j));
                    occupation.insert((j + 1).to_string(), json!(occ / a.horizon));
                }
                let occ = occupation_time(&path, |i| p.valley_of(i).is_none());
                occupation.insert("delta".into(), json!(occ / a.horizon));
                let coarse = project_by(&path, |i| p.valley_of(i), Projection::Phi)?;
                Some(coarse_jump_counts(&coarse, p.valley_count()))
            }
            None => {
                for i in 0..chain.len() {
                    let occ = occupation_time(&path, |x| x == i);
                    occupation.insert(chain.label(i).to_string(), json!(occ / a.horizon));
                }
                None
            }
        };
        let file = format!("trajectory_{trial:04}.csv");
        let summary = json!({
            "file": file,
            "jumps": path.jumps.len(),
            "occupation": occupation,
            "coarse_jumps": coarse_jumps,
        });
        Ok((csv, summary))
    });
    let mut trajectories = Vec::with_capacity(a.trials);
    let mut occupation_mean: Map<String, Value> = Map::new();
    let mut total: Option<Vec<Vec<f64>>> = None;
    for result in results {
        let (csv, summary) = result?;
        write(
            &a.out.join(summary["file"].as_str().expect("file name")),
            &csv,
        )?;
        for (k, v) in summary["occupation"].as_object().expect("occupation map") {
            let acc = occupation_mean
                .get(k)
                .and_then(Value::as_f64)
                .unwrap_or(0.0);
            occupation_mean.insert(
                k.clone(),
                json!(acc + v.as_f64().unwrap_or(0.0) / a.trials as f64),
            );
        }
        if let Some(m) = summary["coarse_jumps"].as_array() {
            let t = total.get_or_insert_with(|| vec![vec![0.0; m.len()]; m.len()]);
            for (j, row) in m.iter().enumerate() {
                for (k, v) in row.as_array().expect("matrix row").iter().enumerate() {
                    t[j][k] += v.as_f64().unwrap_or(0.0);
                }
            }
        }
        trajectories.push(summary);
    }
    let mut report = l.report("simulate");
    let mut section = json!({
        "start": a.start,
        "horizon": a.horizon,
        "trials": a.trials,
        "seed": a.seed,
        "surgery": a.surgery.name(),
        "occupation_mean": occupation_mean,
        "trajectories": trajectories,
    });
    if let Some(t) = total {
        section["coarse_jumps_total"] = json!(t);
    }
    report.section("simulation", section);
    emit(&report, Some(&a.out.join("summary.json")))
}

/// Replaces every numeric `start` field by the state label.
fn label_starts(v: &mut Value, chain: &Chain) {
    match v {
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k == "start" {
                    if let Some(i) = x.as_u64() {
                        *x = json!(chain.label(i as usize));
                        continue;
                    }
                }
                label_starts(x, chain);
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(|x| label_starts(x, chain)),
        _ => {}
    }
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| Error::Input(format!("cannot parse grid '{text}'")))?;
    if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::Input(
            "grid times must be positive and finite".into(),
        ));
    }
    Ok(grid)
}

struct ValidateArgs<'a> {
    theta: Option<f64>,
    grid: &'a str,
    horizon: Option<f64>,
    trials: usize,
    seed: u64,
    jobs: usize,
    out: Option<&'a FsPath>,
}

fn validate(input: &InputArgs, a: &ValidateArgs<'_>) -> Result<String> {
    let l = load(input)?;
    let partition = l.partition()?;
    partition.require_reducible()?;
    let (chain, pi) = (&l.chain, &l.pi[..]);
    let grid = parse_grid(a.grid)?;
    if a.trials == 0 {
        return Err(Error::Input("trials must be positive".into()));
    }
    let model = coarse_rates(chain, pi, partition, a.theta)?;
    let theta = model.theta;
    let horizon = a
        .horizon
        .unwrap_or_else(|| grid.iter().copied().fold(0.0, f64::max));
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Input(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let delta = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let valley_of = |i: usize| partition.valley_of(i);
    let sampler = Sampler {
        kernel: chain,
        valley_of: &valley_of,
        starts: (0..partition.valley_count())
            .map(|j| (j, reference_state(chain, pi, partition.valley(j))))
            .collect(),
        theta,
        trials: a.trials,
        seed: a.seed,
        jobs: a.jobs,
    };
    let small = chain.len() <= config().oracle_limit;
    let fdd = fdd_compare(&sampler, &model, &grid, small.then_some(chain))?;
    let t2 = estimate_t2(&sampler, horizon, Some(delta))?;
    let sup91 = estimate_91(&sampler, delta)?;

    let mut t2v = serde_json::to_value(&t2).expect("serializable");
    for (row, est) in t2v["rows"]
        .as_array_mut()
        .expect("rows")
        .iter_mut()
        .zip(&t2.rows)
    {
        let exact = if small {
            let mut mu = vec![0.0; chain.len()];
            mu[est.start] = 1.0;
            let occ = integrated_transient(chain, &mu, horizon * theta)?;
            Some(partition.delta().iter().map(|&i| occ[i]).sum::<f64>() / theta)
        } else {
            None
        };
        let z = exact.map(|x| {
            let gap = (est.mean - x).abs();
            if est.stderr > 0.0 {
                gap / est.stderr
            } else if gap <= 1e-12 {
                0.0
            } else {
                f64::MAX
            }
        });
        row["exact"] = json!(exact);
        row["z_score"] = json!(z);
    }
    let mut section = json!({
        "theta": theta,
        "trials": a.trials,
        "seed": a.seed,
        "grid": grid,
        "fdd": serde_json::to_value(&fdd).expect("serializable"),
        "t2": t2v,
        "sup91": serde_json::to_value(&sup91).expect("serializable"),
    });
    label_starts(&mut section, chain);
    let mut report = l.report("validate");
    report.section("validation", section);
    emit(&report, a.out)
}

/// Runs a parsed command and returns the text to print on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze { input, theta, out } => analyze(input, *theta, out.as_deref()),
        Command::Cycles { input, out } => cycles(input, out.as_deref()),
        Command::Simulate {
            input,
            start,
            horizon,
            trials,
            seed,
            jobs,
            surgery,
            out,
        } => simulate_cmd(
            input,
            &SimArgs {
                start,
                horizon: *horizon,
                trials: *trials,
                seed: *seed,
                jobs: *jobs,
                surgery: *surgery,
                out,
            },
        ),
        Command::Validate {
            input,
            theta,
            grid,
            horizon,
            trials,
            seed,
            jobs,
            out,
        } => validate(
            input,
            &ValidateArgs {
                theta: *theta,
                grid,
                horizon: *horizon,
                trials: *trials,
                seed: *seed,
                jobs: *jobs,
                out: out.as_deref(),
            },
        ),
    }
}

/// JSON error object written to stderr.
pub fn error_json(e: &Error) -> String {
    json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()}})
        .to_string()
}

/// Full entry point: parses `args`, runs, prints, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
