use causal_vp::examples::{self, ExampleError, ExampleOutput};
use causal_vp::fermion;
use causal_vp::homogeneous::{self, Domain, RadialDomain};
use causal_vp::io::{self, fmt_f64, ConfigFile, FermionFile, IoError, NegDefFile};
use causal_vp::measure::{self, Constraint, DiscreteConfig};
use causal_vp::optimize::{self, OptimConfig, OptimError, OptimResult};
use causal_vp::spectral::{self, SpectrumTable};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cvp", version, about = "Causal variational principles on matrix measures")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CAL_THREADS")]
    threads: Option<usize>,
    /// Output format (each command has its own default).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintFlag {
    C1,
    C2,
}

#[derive(Subcommand)]
enum Cmd {
    /// S, T, constraint residuals and the causal census of a configuration.
    Action {
        /// Configuration file ("-" for stdin).
        config: String,
        /// Exit with status 3 unless this constraint holds (repeatable).
        #[arg(long, value_enum)]
        require: Vec<ConstraintFlag>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Minimize a problem file. Writes <OUT>.json (result) and <OUT>.csv (iterations,
    /// columns restart,outer,iter,value,grad_norm,penalty) when --out is given.
    Minimize {
        problem: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Eigenvalues λ_l(β) of the sphere operator. CSV columns: beta,l,lambda, plus
    /// l_star,lambda_star (first negative eigenvalue, empty if none) with --find-negative.
    Spectrum {
        #[arg(long, default_value_t = 0.0)]
        beta_min: f64,
        #[arg(long, default_value_t = 0.0)]
        beta_max: f64,
        #[arg(long, default_value_t = 1)]
        beta_steps: usize,
        #[arg(long, default_value_t = 20)]
        l_max: usize,
        #[arg(long)]
        find_negative: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Generate a named example, e.g. `example two_point --beta 0.3 --verify`.
    /// Parameters are given as `--key value` or `key=value`.
    Example {
        name: String,
        /// Compare against the expected values; exit 3 on any miss.
        #[arg(long)]
        verify: bool,
        /// Dump the generated configuration or measure in its file format.
        #[arg(long)]
        json: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        params: Vec<String>,
    },
    /// Moment measures of a configuration and the moment inequality check.
    Moments {
        config: String,
        #[arg(long, default_value_t = 1000)]
        unions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fermion systems.
    Fermion {
        #[command(subcommand)]
        cmd: FermionCmd,
    },
    /// S, T, Tr P(0) and the local bound of a negative definite measure. Domains:
    /// `cylinder:L[:R_MAX]`, `radial:T_CUT,T_PANEL,R_MAX,R_PANEL,NODES`, `lattice:PATH`
    /// (PATH holds [{"xi": [4 reals], "w": weight}, ...]), or `none`.
    Homogeneous {
        measure: String,
        #[arg(long, default_value = "none")]
        domain: String,
    },
}

#[derive(Subcommand)]
enum FermionCmd {
    /// Build wave functions realizing a configuration.
    Reconstruct {
        config: String,
        #[arg(long)]
        out: Option<String>,
        /// Exit 3 if the roundtrip residual exceeds this.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Local correlation matrices of a fermion system.
    Correlate {
        system: String,
        /// Compare against this configuration.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

enum Failure {
    Validation(String),
    Tolerance(String),
    Runtime(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

type Res = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().expect("thread pool set up once");
    }
    match run(cli.cmd, cli.format) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Tolerance(m)) => {
            eprintln!("tolerance failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Cmd, format: Option<Format>) -> Res {
    let fmt = format.unwrap_or(Format::Json);
    match cmd {
        Cmd::Action { config, require, tol } => cmd_action(&config, &require, tol, fmt),
        Cmd::Minimize { problem, seed, restarts, out } => cmd_minimize(&problem, seed, restarts, out.as_deref(), fmt),
        Cmd::Spectrum { beta_min, beta_max, beta_steps, l_max, find_negative, out } => {
            cmd_spectrum(beta_min, beta_max, beta_steps, l_max, find_negative, out.as_deref(), format.unwrap_or(Format::Csv))
        }
        Cmd::Example { name, verify, json, params } => cmd_example(&name, &params, verify, json, fmt),
        Cmd::Moments { config, unions, seed } => cmd_moments(&config, unions, seed, fmt),
        Cmd::Fermion { cmd: FermionCmd::Reconstruct { config, out, tol } } => cmd_reconstruct(&config, out.as_deref(), tol),
        Cmd::Fermion { cmd: FermionCmd::Correlate { system, config, tol } } => cmd_correlate(&system, config.as_deref(), tol, fmt),
        Cmd::Homogeneous { measure, domain } => cmd_homogeneous(&measure, &domain, fmt),
    }
}

/// Prints to stdout, treating a closed pipe as a normal end.
fn say(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn write_out(path: Option<&str>, text: &str) -> Res {
    match path {
        None | Some("-") => {
            say(text);
            Ok(())
        }
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{p}: {e}"))),
    }
}

fn num(v: &Value) -> String {
    match v {
        Value::Number(x) if x.is_f64() => fmt_f64(x.as_f64().unwrap()),
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// key,value lines for every scalar leaf, with dotted paths.
fn flatten(prefix: &str, v: &Value, out: &mut String) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&key(k), x, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, out)),
        leaf => out.push_str(&format!("{prefix},{}\n", num(leaf))),
    }
}

fn emit(v: &Value, fmt: Format) {
    match fmt {
        Format::Json => say(&(io::to_json(v) + "\n")),
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            flatten("", v, &mut s);
            say(&s);
        }
    }
}

fn load_config(path: &str) -> Result<DiscreteConfig, Failure> {
    Ok(io::parse_config(&io::read_source(path)?)?)
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("plain data serializes")
}

fn cmd_action(path: &str, require: &[ConstraintFlag], tol: f64, fmt: Format) -> Res {
    let cfg = load_config(path)?;
    let (s, t) = measure::functionals(&cfg).map_err(invalid)?;
    let rep = measure::check_constraints(&cfg, &[Constraint::Trace, Constraint::Identity], tol).map_err(invalid)?;
    let census = measure::causal_census(&cfg).map_err(invalid)?;
    emit(
        &json!({
            "S": s,
            "T": t,
            "trace_residual": rep.trace_residual,
            "identity_residual": rep.identity_residual,
            "census": to_value(&census),
        }),
        fmt,
    );
    for r in require {
        let (label, res) = match r {
            ConstraintFlag::C1 => ("trace constraint", rep.trace_residual),
            ConstraintFlag::C2 => ("identity constraint", rep.identity_residual),
        };
        if !(res <= tol) {
            return Err(Failure::Tolerance(format!("{label} residual {} > {}", fmt_f64(res), fmt_f64(tol))));
        }
    }
    Ok(())
}

fn config_file(c: &OptimConfig) -> ConfigFile {
    match c {
        OptimConfig::Discrete(d) => ConfigFile::from_config(d),
        OptimConfig::Sphere(s) => ConfigFile::from_sphere(s),
    }
}

fn trace_csv(res: &OptimResult) -> String {
    let mut s = String::from("restart,outer,iter,value,grad_norm,penalty\n");
    for r in &res.trace {
        s.push_str(&format!("{},{},{},{},{},{}\n", r.restart, r.outer, r.iter, fmt_f64(r.value), fmt_f64(r.grad_norm), fmt_f64(r.penalty)));
    }
    s
}

fn cmd_minimize(path: &str, seed: Option<u64>, restarts: Option<usize>, out: Option<&str>, fmt: Format) -> Res {
    let mut prob = io::parse_problem(&io::read_source(path)?)?;
    if let Some(s) = seed {
        prob.options.seed = s;
    }
    if let Some(r) = restarts {
        prob.options.restarts = r;
    }
    let res = match optimize::minimize_general(&prob) {
        Ok(r) => r,
        Err(e @ (OptimError::InvalidProblem(_) | OptimError::Infeasible(_) | OptimError::Measure(_))) => return Err(invalid(e)),
        Err(e) => return Err(Failure::Tolerance(e.to_string())),
    };
    let summary = json!({
        "value": res.value,
        "restart": res.restart,
        "grad_norm": res.grad_norm,
        "residuals": to_value(&res.residuals),
        "config": to_value(&config_file(&res.config)),
    });
    if let Some(prefix) = out {
        write_out(Some(&format!("{prefix}.json")), &(io::to_json(&summary) + "\n"))?;
        write_out(Some(&format!("{prefix}.csv")), &trace_csv(&res))?;
    }
    match fmt {
        Format::Json => say(&(io::to_json(&summary) + "\n")),
        Format::Csv => say(&trace_csv(&res)),
    }
    Ok(())
}

fn cmd_spectrum(lo: f64, hi: f64, steps: usize, l_max: usize, find_negative: bool, out: Option<&str>, fmt: Format) -> Res {
    if !(0.0..1.0).contains(&lo) || !(0.0..1.0).contains(&hi) || hi < lo {
        return Err(invalid(format!("need 0 <= beta-min <= beta-max < 1, got [{lo}, {hi}]")));
    }
    let table = SpectrumTable::build(lo, hi, steps, l_max);
    let negatives: BTreeMap<u64, Option<(usize, f64)>> = if find_negative {
        spectral::beta_grid(lo, hi, steps).into_iter().map(|b| (b.to_bits(), spectral::find_negative(b, l_max).ok())).collect()
    } else {
        BTreeMap::new()
    };
    let text = match fmt {
        Format::Csv => {
            let mut s = String::from(if find_negative { "beta,l,lambda,l_star,lambda_star\n" } else { "beta,l,lambda\n" });
            for r in &table.rows {
                s.push_str(&format!("{},{},{}", fmt_f64(r.beta), r.l, fmt_f64(r.lambda)));
                if find_negative {
                    match negatives[&r.beta.to_bits()] {
                        Some((l, v)) => s.push_str(&format!(",{l},{}", fmt_f64(v))),
                        None => s.push_str(",,"),
                    }
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let mut v = json!({ "rows": to_value(&table.rows) });
            if find_negative {
                v["negative"] = negatives
                    .iter()
                    .map(|(b, r)| json!({ "beta": f64::from_bits(*b), "l_star": r.map(|x| x.0), "lambda_star": r.map(|x| x.1) }))
                    .collect();
            }
            io::to_json(&v) + "\n"
        }
    };
    write_out(out, &text)
}

fn parse_params(raw: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    let mut it = raw.iter();
    while let Some(a) = it.next() {
        let (k, v) = if let Some((k, v)) = a.split_once('=') {
            (k.trim_start_matches("--").to_string(), v.to_string())
        } else if let Some(k) = a.strip_prefix("--") {
            let v = it.next().ok_or_else(|| invalid(format!("parameter --{k} needs a value")))?;
            (k.to_string(), v.clone())
        } else {
            return Err(invalid(format!("cannot read parameter '{a}'")));
        };
        let x: f64 = v.parse().map_err(|_| invalid(format!("parameter {k}: '{v}' is not a number")))?;
        out.insert(k, x);
    }
    Ok(out)
}

fn example_err(e: ExampleError) -> Failure {
    match e {
        ExampleError::UnknownExample(_) | ExampleError::InvalidParams(_) => invalid(e),
        other => Failure::Runtime(other.to_string()),
    }
}

fn cmd_example(name: &str, raw: &[String], mut verify: bool, mut dump: bool, mut fmt: Format) -> Res {
    // the flags may also trail the parameters
    let mut rest = Vec::new();
    let mut it = raw.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--verify" => verify = true,
            "--json" => dump = true,
            "--format" => {
                let v = it.next().map(String::as_str);
                fmt = Format::from_str(v.unwrap_or(""), true).map_err(|_| invalid(format!("unknown format {v:?}")))?;
            }
            _ => rest.push(a.clone()),
        }
    }
    let case = examples::make(name, &parse_params(&rest)?).map_err(example_err)?;
    if dump {
        let v = match &case.output {
            ExampleOutput::Discrete(c) => to_value(&ConfigFile::from_config(c)),
            ExampleOutput::Sphere(s) => to_value(&ConfigFile::from_sphere(s)),
            ExampleOutput::NegDef(nu) => to_value(&NegDefFile::from_measure(nu)),
            ExampleOutput::Scalar(m) => to_value(m),
        };
        say(&(io::to_json(&v) + "\n"));
        if !verify {
            return Ok(());
        }
    }
    if !verify {
        let vals = examples::evaluate(&case).map_err(example_err)?;
        emit(&to_value(&vals), fmt);
        return Ok(());
    }
    let rows = examples::verify(&case).map_err(example_err)?;
    match fmt {
        Format::Csv => {
            let mut s = String::from("quantity,expected,computed,tolerance,pass\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{},{}\n", r.quantity, fmt_f64(r.expected), fmt_f64(r.computed), fmt_f64(r.tolerance), r.pass));
            }
            say(&s);
        }
        Format::Json => say(&(io::to_json(&rows) + "\n")),
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.quantity.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!("{name}: {}", failed.join(", "))))
    }
}

fn cmd_moments(path: &str, unions: usize, seed: u64, fmt: Format) -> Res {
    let cfg = load_config(path)?;
    let m = measure::moments(&cfg);
    let rep = measure::moment_inequalities(&m, unions, seed);
    emit(&json!({ "moments": to_value(&m), "inequalities": to_value(&rep) }), fmt);
    if rep.holds {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!("moment inequality violated, slack {}", fmt_f64(rep.worst_slack))))
    }
}

fn cmd_reconstruct(path: &str, out: Option<&str>, tol: f64) -> Res {
    let cfg = load_config(path)?;
    let sys = fermion::reconstruct(&cfg).map_err(invalid)?;
    write_out(out, &(io::to_json(&FermionFile::from_system(&sys)) + "\n"))?;
    let res = fermion::roundtrip_residual(&cfg, &sys);
    eprintln!("roundtrip residual {}", fmt_f64(res));
    if res <= tol {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!("roundtrip residual {} > {}", fmt_f64(res), fmt_f64(tol))))
    }
}

fn cmd_correlate(path: &str, config: Option<&str>, tol: f64, fmt: Format) -> Res {
    let sys = io::parse_fermion(&io::read_source(path)?)?;
    let mats: Vec<Value> = (0..sys.sites())
        .map(|x| {
            let f = fermion::local_correlation(&sys, x);
            json!({ "x": x, "re": f.re_rows(), "im": f.im_rows() })
        })
        .collect();
    let mut v = json!({ "correlations": mats });
    let residual = match config {
        Some(c) => {
            let cfg = load_config(c)?;
            if cfg.points.len() != sys.sites() || cfg.f != sys.f() {
                return Err(invalid("configuration and fermion system do not match in size"));
            }
            let r = fermion::roundtrip_residual(&cfg, &sys);
            v["roundtrip_residual"] = json!(r);
            Some(r)
        }
        None => None,
    };
    emit(&v, fmt);
    match residual {
        Some(r) if !(r <= tol) => Err(Failure::Tolerance(format!("roundtrip residual {} > {}", fmt_f64(r), fmt_f64(tol)))),
        _ => Ok(()),
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticePoint {
    xi: [f64; 4],
    w: f64,
}

fn parse_domain(spec: &str) -> Result<Option<Domain>, Failure> {
    let bad = || invalid(format!("cannot read domain '{spec}'"));
    let nums = |s: &str| s.split([',', ':']).map(|x| x.trim().parse::<f64>()).collect::<Result<Vec<f64>, _>>().map_err(|_| bad());
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "none" => Ok(None),
        "cylinder" => match nums(rest)?.as_slice() {
            [l] if *l > 0.0 => Ok(Some(Domain::Radial(RadialDomain::for_cylinder(*l, 400.0)))),
            [l, r] if *l > 0.0 && *r > 0.0 => Ok(Some(Domain::Radial(RadialDomain::for_cylinder(*l, *r)))),
            _ => Err(bad()),
        },
        "radial" => match nums(rest)?.as_slice() {
            [t_cut, t_panel, r_max, r_panel, nodes] if nodes.fract() == 0.0 && *nodes >= 1.0 => {
                Ok(Some(Domain::Radial(RadialDomain { t_cut: *t_cut, t_panel: *t_panel, r_max: *r_max, r_panel: *r_panel, nodes: *nodes as usize })))
            }
            _ => Err(bad()),
        },
        "lattice" => {
            let pts: Vec<LatticePoint> = serde_json::from_str(&io::read_source(rest)?).map_err(IoError::from)?;
            Ok(Some(Domain::Lattice(pts.into_iter().map(|p| (p.xi, p.w)).collect())))
        }
        _ => Err(bad()),
    }
}

fn cmd_homogeneous(path: &str, domain: &str, fmt: Format) -> Res {
    let nu = io::parse_negdef(&io::read_source(path)?)?;
    let domain = parse_domain(domain)?;
    let bound = homogeneous::local_bound_check(&nu).map_err(invalid)?;
    let mut v = json!({ "TrP0": nu.total().trace().re, "local_bound": to_value(&bound) });
    match &domain {
        Some(Domain::Radial(rd)) => {
            let r = homogeneous::radial_functionals(&nu, rd).map_err(|e| Failure::Runtime(e.to_string()))?;
            v["S"] = json!(r.s);
            v["T"] = json!(r.t);
            v["radial"] = to_value(&r);
        }
        Some(d) => {
            let (s, t) = homogeneous::hom_functionals(&nu, d).map_err(|e| Failure::Runtime(e.to_string()))?;
            v["S"] = json!(s);
            v["T"] = json!(t);
        }
        None => {}
    }
    emit(&v, fmt);
    if bound.holds {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!("local bound violated, slack {}", fmt_f64(bound.slack))))
    }
}
