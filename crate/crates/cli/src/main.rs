use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use occupancy::kernel::{convolution_power, format_rational, norm_const, parse_rational, set_enum_cap, Preset};
use occupancy::maxent::{check_scale_consistency, format_float, exact_log_weight_mean, solve_ma, DEFAULT_TOL};
use occupancy::models::{exponential_family_conditional, realize};
use occupancy::processes::{grid_report, verify_uosp, verify_uosp_grid, MixedGeometricSpec};
use occupancy::structure::{classify_germ, deconvolve, GermClass};
use occupancy::transforms::{
    condition_on_prefix, drop_particle, merge, star_condition_witness, verify_condition_merge_commute,
    verify_drop_merge_commute, verify_merge_closure, verify_merge_composition,
};
use occupancy::verdict::{compare, Verdict};
use occupancy::{Error, MaSpec, OccupancyModel, Result, ThetaMixture, WeightFunction};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "occupancy", version, about = "Exact exchangeable occupancy models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an M^(a) model.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Apply a transformation to a model dump.
    #[command(subcommand)]
    Transform(TransformCommand),
    /// Run an exact identity check.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Test whether a weight table is an s-fold convolution power.
    Deconvolve(DeconvolveArgs),
    /// Maximum-entropy runs.
    #[command(subcommand)]
    Maxent(MaxentCommand),
}

#[derive(Args, Clone)]
struct WeightArgs {
    /// Weight file, or one of mb, be, fd, pc:s, mh:s.
    #[arg(long)]
    weights: String,
    /// Table length for presets (ignored for files).
    #[arg(long)]
    x_max: Option<usize>,
}

#[derive(Subcommand)]
enum ModelCommand {
    Build {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        /// Write the dump here instead of stdout.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TransformCommand {
    Merge {
        model: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Drop {
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Condition {
        model: PathBuf,
        #[arg(long)]
        prefix_n: usize,
        #[arg(long)]
        prefix_r: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// merge(merge(m, s2), s1) == merge(m, s1*s2) on A(N, r).
    Composition {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        s1: usize,
        #[arg(long)]
        s2: usize,
    },
    /// Merging M^(a) on n*s cells gives M^(a') on n cells.
    Closure {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        s: usize,
    },
    /// The dropping condition on A(n, r-1).
    Star {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
    },
    /// Dropping commutes with merging n*s cells into n.
    DropCommute {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        s: usize,
    },
    /// Conditioning on n of N macrocells commutes with merging N*s cells.
    CondCommute {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long = "R")]
        big_r: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        s: usize,
    },
    /// The exponential-family conditional law does not depend on the mixture.
    LambdaIndependence {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        /// `tilt:weight,...`; repeat for several mixtures.
        #[arg(long)]
        mixture: Vec<String>,
    },
    /// Jumps of an a-mixed geometric process given N_t = k follow M^(a)(t+1, k).
    Uosp {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 3)]
        max_t: usize,
        #[arg(long, default_value_t = 5)]
        max_k: usize,
        #[arg(long)]
        mixture: Option<String>,
    },
    /// C(a', n, r) == C(a, n*s, r) with a' the s-fold convolution power.
    NormIdentity {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        s: usize,
    },
}

#[derive(Args)]
struct DeconvolveArgs {
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long)]
    s: usize,
    /// Classify as germ or merged over s = 2..=max_s instead.
    #[arg(long)]
    max_s: Option<usize>,
}

#[derive(Subcommand)]
enum MaxentCommand {
    Solve {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        /// Target for E[sum log a(x_j)]; defaults to the exact model value.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
    },
    Consistency {
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        /// Use the convolution-power ladder s -> a^{*s} as the family.
        #[arg(long)]
        ladder: bool,
    },
}

/// Process outcome: a JSON document plus whether the check passed.
struct Report {
    body: Value,
    passed: bool,
}

impl Report {
    fn ok(body: Value) -> Self {
        Report { body, passed: true }
    }
}

fn load_weights(args: &WeightArgs, default_x_max: usize) -> Result<WeightFunction> {
    if let Ok(preset) = Preset::from_str(&args.weights) {
        return Ok(preset.weights(args.x_max.unwrap_or(default_x_max).max(1)));
    }
    let path = Path::new(&args.weights);
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{:?} is neither a preset nor a readable weight file: {e}", args.weights)))?;
    WeightFunction::from_json(&text)
}

fn load_model(path: &Path) -> Result<OccupancyModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    OccupancyModel::from_json(&text)
}

fn write_or_print(model: &OccupancyModel, out: Option<&Path>) -> Result<Report> {
    let text = model.to_json();
    match out {
        Some(path) => {
            fs::write(path, format!("{text}\n")).map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?;
            Ok(Report::ok(json!({
                "written": path.display().to_string(),
                "n": model.n(),
                "r": model.r(),
                "support": model.support_len(),
            })))
        }
        None => Ok(Report::ok(serde_json::from_str(&text).expect("model json parses"))),
    }
}

fn parse_mixture(text: &str) -> Result<ThetaMixture> {
    let components = text
        .split(',')
        .map(|part| {
            let (tilt, weight) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("mixture component {part:?} is not tilt:weight")))?;
            Ok((parse_rational(tilt.trim())?, parse_rational(weight.trim())?))
        })
        .collect::<Result<Vec<_>>>()?;
    ThetaMixture::new(components)
}

fn mixture_json(mix: &ThetaMixture) -> Value {
    Value::Array(
        mix.components()
            .iter()
            .map(|(t, w)| json!({ "tilt": format_rational(t), "weight": format_rational(w) }))
            .collect(),
    )
}

fn verdict_report(check: &str, verdict: &Verdict, mut extra: Value) -> Report {
    let body = extra.as_object_mut().expect("report extras are an object");
    body.insert("check".into(), json!(check));
    body.insert("pass".into(), json!(verdict.passed()));
    body.insert("witness".into(), verdict.witness.as_ref().map_or(Value::Null, |w| w.to_json()));
    Report {
        body: extra,
        passed: verdict.passed(),
    }
}

fn model_value(model: &OccupancyModel) -> Value {
    serde_json::to_value(model.to_dump()).expect("model dump serializes")
}

fn weights_value(a: &WeightFunction) -> Value {
    serde_json::to_value(a.to_file()).expect("weight file serializes")
}

fn run_model(cmd: ModelCommand) -> Result<Report> {
    match cmd {
        ModelCommand::Build { weights, n, r, dump } => {
            let a = load_weights(&weights, r)?;
            let model = realize(&MaSpec::new(a, n, r)?)?;
            write_or_print(&model, dump.as_deref())
        }
    }
}

fn run_transform(cmd: TransformCommand) -> Result<Report> {
    match cmd {
        TransformCommand::Merge { model, s, out } => write_or_print(&merge(&load_model(&model)?, s)?, out.as_deref()),
        TransformCommand::Drop { model, out } => write_or_print(&drop_particle(&load_model(&model)?)?, out.as_deref()),
        TransformCommand::Condition {
            model,
            prefix_n,
            prefix_r,
            out,
        } => write_or_print(&condition_on_prefix(&load_model(&model)?, prefix_n, prefix_r)?, out.as_deref()),
    }
}

fn run_verify(cmd: VerifyCommand) -> Result<Report> {
    match cmd {
        VerifyCommand::Composition { weights, big_n, r, s1, s2 } => {
            let a = load_weights(&weights, r)?;
            let m = realize(&MaSpec::new(a, big_n, r)?)?;
            let verdict = verify_merge_composition(&m, s1, s2)?;
            Ok(verdict_report("composition", &verdict, json!({ "N": big_n, "r": r, "s1": s1, "s2": s2 })))
        }
        VerifyCommand::Closure { weights, n, r, s } => {
            let a = load_weights(&weights, r)?;
            let spec = MaSpec::new(a, n * s, r)?;
            let (verdict, merged) = verify_merge_closure(&spec, s)?;
            let a_prime = convolution_power(spec.a(), s, r.max(1))?;
            Ok(verdict_report(
                "closure",
                &verdict,
                json!({ "merged": model_value(&merged), "merged_weights": weights_value(&a_prime) }),
            ))
        }
        VerifyCommand::Star { weights, n, r } => {
            let a = load_weights(&weights, r)?;
            let witness = star_condition_witness(&a, n, r)?;
            let passed = witness.is_none();
            Ok(Report {
                body: json!({
                    "check": "star",
                    "n": n,
                    "r": r,
                    "pass": passed,
                    "witness": witness.map(|w| json!({ "x": w.x.entries(), "value": format_rational(&w.value), "expected": "1" })),
                }),
                passed,
            })
        }
        VerifyCommand::DropCommute { weights, n, r, s } => {
            let a = load_weights(&weights, r)?;
            let verdict = verify_drop_merge_commute(&MaSpec::new(a, n * s, r)?, s)?;
            Ok(verdict_report("drop-commute", &verdict, json!({ "n": n, "r": r, "s": s })))
        }
        VerifyCommand::CondCommute {
            weights,
            big_n,
            big_r,
            n,
            r,
            s,
        } => {
            let a = load_weights(&weights, big_r)?;
            let verdict = verify_condition_merge_commute(&MaSpec::new(a, big_n * s, big_r)?, n, r, s)?;
            Ok(verdict_report(
                "cond-commute",
                &verdict,
                json!({ "N": big_n, "R": big_r, "n": n, "r": r, "s": s }),
            ))
        }
        VerifyCommand::LambdaIndependence { weights, n, r, mixture } => {
            let a = load_weights(&weights, r)?;
            let mixtures = if mixture.is_empty() {
                vec![
                    "1/2:1".to_string(),
                    "1/5:1/3,4/5:2/3".to_string(),
                    "1/7:1/2,1/3:1/4,9/10:1/4".to_string(),
                ]
            } else {
                mixture
            };
            let target = realize(&MaSpec::new(a.clone(), n, r)?)?;
            let mut verdict = Verdict::pass();
            let mut rows = Vec::new();
            for text in &mixtures {
                let mix = parse_mixture(text)?;
                let v = compare(&exponential_family_conditional(&a, &mix, n, r)?, &target)?;
                rows.push(json!({ "mixture": mixture_json(&mix), "pass": v.passed() }));
                verdict = verdict.and(v);
            }
            Ok(verdict_report("lambda-independence", &verdict, json!({ "n": n, "r": r, "mixtures": rows })))
        }
        VerifyCommand::Uosp {
            weights,
            t,
            k,
            max_t,
            max_k,
            mixture,
        } => {
            let mix = parse_mixture(mixture.as_deref().unwrap_or("1/4:2/5,2/3:3/5"))?;
            match (t, k) {
                (Some(t), Some(k)) => {
                    let a = load_weights(&weights, k)?;
                    let spec = MixedGeometricSpec::new(a, mix, t.max(1))?;
                    let check = verify_uosp(&spec, t, k)?;
                    let mut body = check.to_json();
                    body["check"] = json!("uosp");
                    Ok(Report {
                        passed: check.verdict.passed(),
                        body,
                    })
                }
                (None, None) => {
                    let a = load_weights(&weights, max_k)?;
                    let spec = MixedGeometricSpec::new(a, mix, max_t.max(1))?;
                    let checks = verify_uosp_grid(&spec, max_t, max_k)?;
                    let mut body = grid_report(&checks);
                    body["check"] = json!("uosp");
                    Ok(Report {
                        passed: checks.iter().all(|c| c.verdict.passed()),
                        body,
                    })
                }
                _ => Err(Error::Domain("give both --t and --k, or neither for the grid".into())),
            }
        }
        VerifyCommand::NormIdentity { weights, n, r, s } => {
            let a = load_weights(&weights, r)?;
            if s == 0 {
                return Err(Error::Domain("s must be positive".into()));
            }
            let a_prime = convolution_power(&a, s, r.max(1))?;
            let merged = norm_const(&a_prime, n, r);
            let fine = norm_const(&a, n * s, r);
            let passed = merged == fine;
            Ok(Report {
                body: json!({
                    "check": "norm-identity",
                    "pass": passed,
                    "merged": format_rational(&merged),
                    "fine": format_rational(&fine),
                }),
                passed,
            })
        }
    }
}

fn run_deconvolve(args: DeconvolveArgs) -> Result<Report> {
    let a = load_weights(&args.weights, 6)?;
    match args.max_s {
        Some(max_s) => {
            let body = match classify_germ(&a, max_s)? {
                GermClass::Germ => json!({ "class": "germ", "max_s": max_s }),
                GermClass::Merged { s, factor } => json!({
                    "class": "merged",
                    "max_s": max_s,
                    "s": s,
                    "factor": weights_value(&factor),
                }),
            };
            Ok(Report::ok(body))
        }
        None => Ok(Report::ok(deconvolve(&a, args.s)?.to_json())),
    }
}

fn run_maxent(cmd: MaxentCommand) -> Result<Report> {
    match cmd {
        MaxentCommand::Solve { weights, n, r, c } => {
            let a = load_weights(&weights, r)?;
            let c = match c {
                Some(c) => c,
                None => exact_log_weight_mean(&a, n, r)?,
            };
            let solution = solve_ma(&a, n, r, c, DEFAULT_TOL)?;
            let mut body = solution.to_json();
            body["target"] = json!(format_float(c));
            Ok(Report::ok(body))
        }
        MaxentCommand::Consistency {
            weights,
            n,
            n2,
            r,
            c,
            ladder,
        } => {
            let a = load_weights(&weights, r)?;
            let report = if ladder {
                check_scale_consistency(&|s| convolution_power(&a, s, r.max(1)), n, n2, r, c)?
            } else {
                check_scale_consistency(&|_| Ok(a.clone()), n, n2, r, c)?
            };
            Ok(Report {
                passed: report.consistent,
                body: report.to_json(),
            })
        }
    }
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Infeasible(_) | Error::ZeroNormalizer { .. } | Error::ZeroProbability(_) | Error::NonConvergence { .. } => 3,
        _ => 2,
    }
}

fn emit_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };

    if let Ok(cap) = std::env::var("OCCUPANCY_ENUM_CAP") {
        match cap.parse::<usize>() {
            Ok(cap) if cap > 0 => set_enum_cap(cap),
            _ => {
                emit_error("usage", &format!("OCCUPANCY_ENUM_CAP must be a positive integer, got {cap:?}"));
                return ExitCode::from(2);
            }
        }
    }

    let outcome = match cli.command {
        Command::Model(cmd) => run_model(cmd),
        Command::Transform(cmd) => run_transform(cmd),
        Command::Verify(cmd) => run_verify(cmd),
        Command::Deconvolve(args) => run_deconvolve(args),
        Command::Maxent(cmd) => run_maxent(cmd),
    };
    match outcome {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report.body).expect("report serializes");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            emit_error(e.kind(), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}
