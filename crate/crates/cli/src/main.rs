use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde_json::{json, Value};

use hzeta::arith::normalize_point;
use hzeta::constants::{fit_log_polynomial, peyre_constant, poisson_check};
use hzeta::counting::{count_series, ExactBundle};
use hzeta::fourier::local_ft_closed;
use hzeta::heights::{global_height, height_bundle_exact, PicardVector};
use hzeta::oracle::{local_ft_oracle, OracleFactors, OracleOptions};
use hzeta::report;
use hzeta::surface::{classify_character, CharacterKind, SurfaceConfig};

/// Heights, local Fourier transforms and point counts on blow-ups of the
/// projective plane at rational points of the line at infinity.
#[derive(Parser)]
#[command(name = "hzeta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a configuration and print its forms and bad primes.
    Validate { config: PathBuf },
    /// Heights H_0..H_r of an affine point, and H(s; x) for an integral class.
    Height {
        config: PathBuf,
        /// Affine coordinates `x1,x2` (integers or fractions).
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Integral class `s_0,...,s_r`.
        #[arg(long, allow_hyphen_values = true)]
        s: Option<String>,
    },
    /// Count points of bounded height; writes a `B,N` CSV.
    Count {
        config: PathBuf,
        /// Class `s_0,...,s_r` (rationals allowed); defaults to the anticanonical class.
        #[arg(long)]
        bundle: Option<String>,
        /// A single bound.
        #[arg(long, conflicts_with = "grid")]
        bmax: Option<String>,
        /// Comma-separated increasing bounds.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        shards: usize,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form and oracle values of a local transform at a prime.
    Fourier {
        config: PathBuf,
        #[arg(long)]
        p: u64,
        /// Character `a1,a2`.
        #[arg(long = "char", default_value = "0,0", allow_hyphen_values = true)]
        character: String,
        /// Class `s_0,...,s_r`.
        #[arg(long)]
        s: String,
        #[arg(long)]
        alpha_max: Option<u32>,
    },
    /// Both sides of the Poisson identity for the height zeta function.
    ZetaCheck {
        config: PathBuf,
        #[arg(long)]
        s: String,
        #[arg(long, default_value = "10000")]
        b_direct: String,
        #[arg(long, default_value_t = 50)]
        a_max: i64,
        #[arg(long, default_value_t = 1000)]
        p_max: u64,
        #[arg(long)]
        alpha_max: Option<u32>,
        #[arg(long, default_value_t = 1e-2)]
        rel_tol: f64,
        #[arg(long, default_value_t = 1)]
        shards: usize,
    },
    /// Archimedean density, Tamagawa number and predicted leading constant.
    Constant {
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        p_max: u64,
    },
    /// Fit `N(B) / B` from a count CSV by a polynomial in `log B`.
    Fit {
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Compare with the predicted leading constant at this truncation.
        #[arg(long)]
        predict_p_max: Option<u64>,
        /// Fail unless the leading estimate is within this relative distance of the prediction.
        #[arg(long, requires = "predict_p_max")]
        tolerance: Option<f64>,
    },
}

fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().with_context(|| format!("bad numerator in {t:?}"))?;
        let d: BigInt = d.trim().parse().with_context(|| format!("bad denominator in {t:?}"))?;
        if d.is_zero() {
            bail!("zero denominator in {t:?}");
        }
        return Ok(BigRational::new(n, d));
    }
    if let Ok(n) = t.parse::<BigInt>() {
        return Ok(BigRational::from_integer(n));
    }
    let x: f64 = t.parse().with_context(|| format!("not a number: {t:?}"))?;
    BigRational::from_float(x).ok_or_else(|| anyhow!("not a finite number: {t:?}"))
}

fn parse_list(text: &str) -> Result<Vec<BigRational>> {
    text.split(',').map(parse_rational).collect()
}

fn parse_class(text: &str, config: &SurfaceConfig) -> Result<PicardVector<BigRational>> {
    let v = parse_list(text)?;
    if v.len() != config.r() + 1 {
        bail!("class has {} coordinates; the configuration needs {}", v.len(), config.r() + 1);
    }
    Ok(PicardVector::new(v))
}

fn parse_pair(text: &str) -> Result<(i64, i64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("expected two comma-separated integers, got {text:?}");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn load(path: &Path) -> Result<SurfaceConfig> {
    Ok(SurfaceConfig::load(path)?)
}

fn emit(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap());
}

fn height_json(h: &hzeta::heights::HeightValue) -> Value {
    json!({
        "finite": report::rational(&h.finite),
        "arch_squared": report::rational(&h.arch_sq),
        "value": report::real(h.value()),
    })
}

/// Returns whether every requested check passed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { config } => {
            let c = load(&config)?;
            emit(&json!({
                "config": c.name(),
                "r": c.r(),
                "forms": c.forms().iter().map(|f| [f.u, f.v]).collect::<Vec<_>>(),
                "bad_primes": c.bad_primes().iter().collect::<Vec<_>>(),
            }));
            Ok(true)
        }
        Command::Height { config, point, s } => {
            let c = load(&config)?;
            let xs = parse_list(&point)?;
            if xs.len() != 2 {
                bail!("a point has two affine coordinates");
            }
            let x = normalize_point(&xs[0], &xs[1]);
            let heights = (0..=c.r()).map(|k| global_height(&c, k, &x).map(|h| height_json(&h))).collect::<hzeta::Result<Vec<_>>>()?;
            let mut out = json!({
                "config": c.name(),
                "point": [x.a().to_string(), x.b().to_string(), x.c().to_string()],
                "heights": heights,
            });
            if let Some(s) = s {
                let class = parse_class(&s, &c)?;
                let ints = class
                    .iter()
                    .map(|q| q.is_integer().then(|| q.to_integer().to_i64()).flatten())
                    .collect::<Option<Vec<i64>>>()
                    .ok_or_else(|| anyhow!("the class must be integral"))?;
                out["bundle"] = height_json(&height_bundle_exact(&c, &ints, &x)?);
            }
            emit(&out);
            Ok(true)
        }
        Command::Count { config, bundle, bmax, grid, shards, out } => {
            let c = load(&config)?;
            let class = match bundle {
                Some(b) => parse_class(&b, &c)?,
                None => PicardVector::anticanonical(c.r()),
            };
            let grid = match (bmax, grid) {
                (Some(b), None) => vec![parse_rational(&b)?],
                (None, Some(g)) => parse_list(&g)?,
                _ => bail!("give either --bmax or --grid"),
            };
            let series = count_series(&c, &ExactBundle::new(&class)?, &grid, shards.max(1))?;
            match out {
                Some(path) => std::fs::write(&path, series.to_csv()).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", series.to_csv()),
            }
            Ok(true)
        }
        Command::Fourier { config, p, character, s, alpha_max } => {
            let c = load(&config)?;
            let a = parse_pair(&character)?;
            let exact = parse_class(&s, &c)?;
            let class = classify_character(&c, a);
            let opts = match alpha_max {
                Some(m) => OracleOptions::with_alpha_max(m),
                None => OracleOptions::default(),
            };
            let integral = exact.iter().all(|q| q.is_integer());
            let (closed, oracle, delta, tail, alpha, leaves) = if integral {
                let o = local_ft_oracle(&c, p, &exact, a, &opts)?;
                let cl = if class.is_good_at(p) { Some(local_ft_closed(&c, p, &exact, &class)?.value) } else { None };
                let delta = cl.as_ref().map(|v| (v - &o.value).to_f64().unwrap().abs());
                (cl.map(|v| report::rational(&v)), report::rational(&o.value), delta, o.tail_bound, o.alpha_max, o.leaves)
            } else {
                let sf: PicardVector<f64> = exact.map(|q| q.to_f64().unwrap());
                let o = local_ft_oracle(&c, p, &sf, a, &opts)?;
                let cl = if class.is_good_at(p) { Some(local_ft_closed(&c, p, &sf, &class)?.value) } else { None };
                let delta = cl.map(|v| (v - o.value).abs());
                (cl.map(report::real), report::real(o.value), delta, o.tail_bound, o.alpha_max, o.leaves)
            };
            let kind = match class.kind {
                CharacterKind::Trivial => "trivial".to_string(),
                CharacterKind::Generic => "generic".to_string(),
                CharacterKind::Special(k) => format!("special({k})"),
            };
            let pass = delta.map_or(true, |d| d <= tail);
            emit(&json!({
                "config": c.name(),
                "p": p,
                "character": [a.0, a.1],
                "class": kind,
                "closed": closed.unwrap_or(json!("n/a")),
                "oracle": oracle,
                "tail_bound": report::real(tail),
                "alpha_max": alpha,
                "leaves": leaves,
                "difference": delta.map_or(json!("n/a"), report::real),
                "verdict": match delta { None => "ORACLE-ONLY", Some(_) if pass => "PASS", Some(_) => "FAIL" },
            }));
            Ok(pass)
        }
        Command::ZetaCheck { config, s, b_direct, a_max, p_max, alpha_max, rel_tol, shards } => {
            let c = load(&config)?;
            let class = parse_class(&s, &c)?;
            let sc: PicardVector<Complex64> = class.map(|q| Complex64::new(q.to_f64().unwrap(), 0.0));
            let opts = match alpha_max {
                Some(m) => OracleOptions::with_alpha_max(m),
                None => OracleOptions::with_target(1e-10),
            };
            let rep = poisson_check(&c, &sc, &parse_rational(&b_direct)?, a_max, p_max, opts, shards.max(1))?;
            let pass = rep.within_bounds && rep.relative_difference() <= rel_tol;
            let mut v = report::poisson_report(c.name(), &rep);
            v["verdict"] = json!(if pass { "PASS" } else { "FAIL" });
            emit(&v);
            Ok(pass)
        }
        Command::Constant { config, p_max } => {
            let c = load(&config)?;
            let rep = peyre_constant(&c, p_max, &OracleFactors::new(OracleOptions::with_target(1e-8)))?;
            emit(&report::constant_report(&rep));
            Ok(true)
        }
        Command::Fit { config, csv, predict_p_max, tolerance } => {
            let c = load(&config)?;
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let mut grid = Vec::new();
            let mut counts = Vec::new();
            for (i, line) in text.lines().enumerate().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let (b, n) = line.split_once(',').ok_or_else(|| anyhow!("line {}: expected B,N", i + 1))?;
                grid.push(parse_rational(b)?.to_f64().unwrap());
                counts.push(n.trim().parse::<u64>().with_context(|| format!("line {}", i + 1))? as f64);
            }
            let f = fit_log_polynomial(&grid, &counts, c.r())?;
            let predicted = match predict_p_max {
                Some(p) => Some(peyre_constant(&c, p, &OracleFactors::new(OracleOptions::with_target(1e-8)))?.predicted_leading_coeff.value),
                None => None,
            };
            emit(&report::fit(c.name(), &f, predicted));
            Ok(match (tolerance, predicted) {
                (Some(tol), Some(p)) => (f.leading_estimate / p - 1.0).abs() <= tol,
                _ => true,
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
