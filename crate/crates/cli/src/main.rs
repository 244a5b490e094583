//! `bernmark`: sharp Markov-Bernstein constants for exponential polynomials
//! and certified Euler steps for linear switching systems.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bernmark::laguerre::{bounds_report, table};
use bernmark::oracle::step_value;
use bernmark::switching::{simulate, step_bound};
use bernmark::{
    chebyshev_polynomial, markov_constant, Error, ExpSpectrum, MatrixFamily, RemezOptions,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{csv_list, emit, format_float, to_json};

#[derive(Parser, Debug)]
#[command(name = "bernmark", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Out {
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format [default: json, or csv for `table`].
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sharp constant m_l(h) with its Chebyshev certificate.
    Constant {
        /// Exponents, comma-separated; repeated values become multiplicities.
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        h: Vec<f64>,
        /// Derivative order.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        ell: u32,
        /// Remez stopping tolerance on the norm excess.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Uniform constants m_{l,n}, n = 2..n_max, against the closed-form bound.
    Table {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        ell: u32,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..=32))]
        n_max: u32,
        /// Remez stopping tolerance on the norm excess.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Two-sided bounds on m_{l,n} and on the Laguerre-weight derivative.
    Bounds {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        ell: u32,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=32))]
        n: u32,
        /// Remez stopping tolerance on the norm excess.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Samples of the extremal polynomial T_h and its alternance, for plotting.
    Extremal {
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        h: Vec<f64>,
        /// Number of sample points.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(2..))]
        samples: u32,
        /// Remez stopping tolerance on the norm excess.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Certified Euler step bounds for a matrix family.
    Step {
        /// Matrix family JSON: {"dimension": n, "matrices": [[[row-major]]]}.
        #[arg(long)]
        input: PathBuf,
        /// Stability margin.
        #[arg(long, value_parser = positive)]
        eps: f64,
        /// Remez stopping tolerance on the norm excess.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Grid-LP lower estimate of the step problem value s(h, eps).
    StepValue {
        #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
        h: Vec<f64>,
        #[arg(long, value_parser = positive)]
        eps: f64,
        /// Grid refinement level.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(0..=2))]
        level: u32,
        /// Bisection tolerance [default: 1e-6 / eps].
        #[arg(long, value_parser = positive)]
        tol: Option<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Random switching trajectories of x(k+1) = (I + tau A(k)) x(k).
    Simulate {
        #[arg(long)]
        input: PathBuf,
        /// Step size.
        #[arg(long, value_parser = positive, required_unless_present = "eps", conflicts_with = "eps")]
        tau: Option<f64>,
        /// Use the certified step `tau_individual` at this margin.
        #[arg(long, value_parser = positive)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
        steps: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=10_000))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Remez stopping tolerance when `--eps` is given.
        #[arg(long, default_value_t = 1e-9, value_parser = positive)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{s}` must be a positive finite number"))
    }
}

struct Failure {
    code: u8,
    name: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::InvalidInput(_)) {
            2
        } else {
            3
        };
        Failure {
            code,
            name: e.name(),
            message: e.to_string(),
        }
    }
}

fn invalid_input(message: String) -> Failure {
    Failure {
        code: 2,
        name: "InvalidInput",
        message,
    }
}

fn remez(tol: f64) -> Result<RemezOptions, Failure> {
    if tol <= 1e-14 || tol >= 1e-2 {
        return Err(invalid_input(format!("tol = {tol} outside (1e-14, 1e-2)")));
    }
    Ok(RemezOptions::with_tol(tol))
}

fn read_family(path: &Path) -> Result<MatrixFamily, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid_input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid_input(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    to_json(value).map_err(|e| Failure {
        code: 3,
        name: "Serialization",
        message: e.to_string(),
    })
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = format!("{header}\n");
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct ExtremalSamples {
    spectrum: ExpSpectrum,
    coeffs: Vec<f64>,
    alternance: Vec<f64>,
    alternance_values: Vec<f64>,
    points: Vec<[f64; 2]>,
}

fn run(command: Command) -> Result<(String, Option<PathBuf>), Failure> {
    match command {
        Command::Constant { h, ell, tol, out } => {
            let spectrum = ExpSpectrum::from_values(&h)?;
            let m = markov_constant(&spectrum, ell as usize, &remez(tol)?)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&m)?,
                Format::Csv => csv(
                    "h,ell,value,method",
                    [vec![
                        csv_list(&spectrum.expanded()),
                        ell.to_string(),
                        format_float(m.value),
                        serde_json::to_value(m.method)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                    ]],
                ),
            };
            Ok((text, out.output))
        }
        Command::Table {
            ell,
            n_max,
            tol,
            out,
        } => {
            let t = table(ell as usize, n_max as usize, &remez(tol)?)?;
            let text = match out.format.unwrap_or(Format::Csv) {
                Format::Json => json(&t)?,
                Format::Csv => t.to_csv(format_float),
            };
            Ok((text, out.output))
        }
        Command::Bounds { ell, n, tol, out } => {
            let b = bounds_report(ell as usize, n as usize, &remez(tol)?)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&b)?,
                Format::Csv => flat_csv(&b)?,
            };
            Ok((text, out.output))
        }
        Command::Extremal {
            h,
            samples,
            tol,
            out,
        } => {
            let spectrum = ExpSpectrum::from_values(&h)?;
            let cert = chebyshev_polynomial(&spectrum, &remez(tol)?)?;
            let p = &cert.polynomial;
            let last = *cert.alternance.last().unwrap_or(&0.0);
            let end = 1.5
                * if last > 0.0 {
                    last
                } else {
                    1.0 / spectrum.h_min()
                };
            let points: Vec<[f64; 2]> = (0..samples)
                .map(|i| {
                    let t = end * i as f64 / (samples - 1) as f64;
                    [t, p.evaluate(t)]
                })
                .collect();
            let data = ExtremalSamples {
                spectrum: spectrum.clone(),
                coeffs: p.coeffs().to_vec(),
                alternance_values: cert.alternance.iter().map(|&t| p.evaluate(t)).collect(),
                alternance: cert.alternance.clone(),
                points,
            };
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&data)?,
                Format::Csv => {
                    let samples = data.points.iter().map(|[t, v]| (t, v, "sample"));
                    let alt = data
                        .alternance
                        .iter()
                        .zip(&data.alternance_values)
                        .map(|(t, v)| (t, v, "alternance"));
                    csv(
                        "t,value,kind",
                        samples
                            .chain(alt)
                            .map(|(t, v, k)| vec![format_float(*t), format_float(*v), k.into()]),
                    )
                }
            };
            Ok((text, out.output))
        }
        Command::Step {
            input,
            eps,
            tol,
            out,
        } => {
            let family = read_family(&input)?;
            let est = step_bound(&family, eps, &remez(tol)?)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&est)?,
                Format::Csv => csv(
                    "index,eigenvalues,shifted,m2,bound,tau_individual,tau_uniform",
                    est.per_matrix.iter().map(|m| {
                        vec![
                            m.index.to_string(),
                            csv_list(&m.eigenvalues),
                            csv_list(&m.shifted.expanded()),
                            format_float(m.m2),
                            format_float(m.bound),
                            format_float(est.tau_individual),
                            format_float(est.tau_uniform),
                        ]
                    }),
                ),
            };
            Ok((text, out.output))
        }
        Command::StepValue {
            h,
            eps,
            level,
            tol,
            out,
        } => {
            let spectrum = ExpSpectrum::from_values(&h)?;
            let s = step_value(&spectrum, eps, level as usize, tol)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&s)?,
                Format::Csv => csv(
                    "h,eps,level,value,bisection_gap",
                    [vec![
                        csv_list(&spectrum.expanded()),
                        format_float(eps),
                        level.to_string(),
                        format_float(s.value),
                        format_float(s.bisection_gap),
                    ]],
                ),
            };
            Ok((text, out.output))
        }
        Command::Simulate {
            input,
            tau,
            eps,
            steps,
            trials,
            seed,
            tol,
            out,
        } => {
            let family = read_family(&input)?;
            let tau = match (tau, eps) {
                (Some(tau), _) => tau,
                (None, Some(eps)) => step_bound(&family, eps, &remez(tol)?)?.tau_individual,
                (None, None) => {
                    return Err(invalid_input("one of --tau or --eps is required".into()))
                }
            };
            let r = simulate(&family, tau, steps as usize, trials as usize, seed)?;
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => json(&r)?,
                Format::Csv => flat_csv(&r)?,
            };
            Ok((text, out.output))
        }
    }
}

/// One header line and one data row from a flat struct.
fn flat_csv<T: Serialize>(value: &T) -> Result<String, Failure> {
    let v = serde_json::to_value(value).map_err(|e| Failure {
        code: 3,
        name: "Serialization",
        message: e.to_string(),
    })?;
    let map = v.as_object().cloned().unwrap_or_default();
    let cell = |v: &serde_json::Value| match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            n.as_f64().map(format_float).unwrap_or_default()
        }
        serde_json::Value::Number(n) => n.to_string(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    };
    Ok(csv(
        &map.keys().cloned().collect::<Vec<_>>().join(","),
        [map.values().map(cell).collect()],
    ))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BERNMARK_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        invalid_input(format!(
            "BERNMARK_THREADS = `{raw}` is not a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| invalid_input(e.to_string()))
}

fn fail(f: Failure) -> ExitCode {
    let payload = serde_json::json!({ "error": f.name, "message": f.message });
    eprintln!("{payload}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail(Failure {
                code: 2,
                name: "InvalidArguments",
                message: e.render().to_string().trim_end().to_string(),
            })
        }
    };
    if let Err(f) = configure_threads() {
        return fail(f);
    }
    match run(cli.command).and_then(|(text, path)| {
        emit(&text, path.as_deref()).map_err(|e| Failure {
            code: 3,
            name: "Io",
            message: e.to_string(),
        })
    }) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}
