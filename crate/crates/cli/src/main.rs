use std::fs::OpenOptions;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lcakp::experiment::{
    approx_experiment, check_lca_row, consistency_experiment, querycount_experiment, quantile_benchmark, write_jsonl,
    ExperimentConfig, InstanceSource, QuantileBenchmark, DEFAULT_EPSILONS,
};
use lcakp::generate::{generate, GeneratorSpec, Profile};
use lcakp::hardness::{self, AlwaysYes, FullScan, HardFamily, HardInstanceSpec, RandomProbe, Strategy};
use lcakp::instance::{partition, SmallOrder};
use lcakp::oracles::{fractional_greedy_value, solve, OracleKind};
use lcakp::rational::{display, parse_rational, Epsilon};
use lcakp::sampling::RandomnessPlan;
use lcakp::{answer_query, KnapsackInstance, LcaConfig, LcaRun};

#[derive(Parser)]
#[command(name = "lcakp", version, about = "Local computation algorithm for Knapsack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "1/4")]
    epsilon: String,
    /// Shared seed, hex encoded.
    #[arg(long, default_value = "00")]
    seed: String,
    #[arg(long, default_value_t = 0)]
    run_nonce: u64,
    #[arg(long, default_value_t = 32)]
    domain_bits: u32,
}

impl RunArgs {
    fn load(&self) -> Result<(KnapsackInstance, LcaConfig, RandomnessPlan)> {
        let inst = KnapsackInstance::load(&self.instance).with_context(|| format!("reading {}", self.instance.display()))?;
        let cfg = LcaConfig::new(Epsilon::parse(&self.epsilon)?).with_domain_bits(self.domain_bits);
        Ok((inst, cfg, RandomnessPlan::new(decode_seed(&self.seed)?, self.run_nonce)))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Brute,
    Dp,
    Greedy,
    Fractional,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Consistency,
    Approx,
    Querycount,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    AlwaysYes,
    FullScan,
    RandomProbe,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance.
    Gen {
        #[arg(long, default_value = "mixed")]
        profile: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        max_weight: u64,
        #[arg(long, default_value = "00")]
        seed: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Answer one membership query.
    Query {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        item: usize,
    },
    /// Evaluate every query of one run and report the resulting solution.
    Materialize {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve with a reference oracle.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "dp")]
        oracle: OracleArg,
    },
    /// Batch experiments; rows are appended as JSON lines.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value = "mixed")]
        profile: String,
        /// Instance sizes; several for querycount.
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<String>,
        #[arg(long, default_value_t = 2000)]
        trials: u64,
        #[arg(long, default_value = "00")]
        seed: String,
        #[arg(long, default_value_t = 32)]
        domain_bits: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Exit non-zero when an acceptance threshold is violated.
        #[arg(long)]
        check: bool,
    },
    /// Hard instance families and the probe-budget adversary.
    Hardness {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Hidden bits of the OR families, e.g. 00100.
        #[arg(long)]
        x: Option<String>,
        #[arg(long, default_value = "1/3")]
        beta: String,
        #[arg(long, value_enum, default_value = "random-probe")]
        strategy: StrategyArg,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value = "00")]
        seed: String,
    },
    /// Reproducible quantile benchmark.
    Rquantile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        pairs: u64,
        #[arg(long)]
        tau: Option<String>,
        #[arg(long)]
        rho: Option<String>,
        #[arg(long)]
        beta: Option<String>,
        #[arg(long)]
        domain_bits: Option<u32>,
        #[arg(long, default_value = "00")]
        seed: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        check: bool,
    },
    /// Flatten JSON-lines reports into CSV.
    Summarize {
        input: PathBuf,
    },
}

fn decode_seed(s: &str) -> Result<Vec<u8>> {
    hex::decode(s.trim_start_matches("0x")).with_context(|| format!("seed {s:?} is not hex"))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn emit_rows<T: serde::Serialize>(out: Option<&PathBuf>, rows: &[T]) -> Result<()> {
    match out {
        Some(path) => {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            write_jsonl(io::BufWriter::new(file), rows)?;
        }
        None => write_jsonl(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn experiment(kind: ExperimentKind, config: ExperimentConfig, sizes: &[usize], out: Option<&PathBuf>) -> Result<bool> {
    let mut ok = true;
    match kind {
        ExperimentKind::Querycount => {
            let rows = querycount_experiment(sizes, &Epsilon::parse(&config.epsilons[0])?, config.trials, &config.seed, config.domain_bits)?;
            let first = rows.first().map(|r| r.expected_samples);
            for r in &rows {
                let pass = r.exact && Some(r.expected_samples) == first;
                eprintln!("[{}] query count n={}: {} samples", if pass { "PASS" } else { "FAIL" }, r.n, r.max_samples);
                ok &= pass;
            }
            emit_rows(out, &rows)?;
        }
        ExperimentKind::Consistency | ExperimentKind::Approx => {
            let rows = match kind {
                ExperimentKind::Consistency => consistency_experiment(&config)?,
                _ => approx_experiment(&config)?,
            };
            for r in &rows {
                for c in check_lca_row(r) {
                    let verdict = if c.pass { "PASS" } else { "FAIL" };
                    eprintln!("[{verdict}] {}: {} observed {:.4} threshold {:.4}", c.criterion, c.detail, c.observed, c.threshold);
                    ok &= c.pass;
                }
            }
            emit_rows(out, &rows)?;
        }
    }
    Ok(ok)
}

fn flatten(prefix: &str, v: &Value, row: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, row);
            }
        }
        Value::String(s) => row.push((prefix.into(), s.clone())),
        Value::Null => row.push((prefix.into(), String::new())),
        other => row.push((prefix.into(), other.to_string())),
    }
}

fn summarize(input: &PathBuf) -> Result<()> {
    let reader = BufReader::new(std::fs::File::open(input)?);
    let mut rows = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        flatten("", &serde_json::from_str(&line)?, &mut row);
        for (k, _) in &row {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
        rows.push(row);
    }
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(&columns)?;
    for row in rows {
        let record: Vec<&str> = columns
            .iter()
            .map(|c| row.iter().find(|(k, _)| k == c).map_or("", |(_, v)| v.as_str()))
            .collect();
        w.write_record(record)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen { profile, n, max_weight, seed, out } => {
            let mut spec = GeneratorSpec::new(profile.parse::<Profile>()?, n, decode_seed(&seed)?);
            spec.max_weight = max_weight;
            let inst = generate(&spec)?;
            match out {
                Some(path) => inst.save(path)?,
                None => {
                    let mut out = io::stdout().lock();
                    inst.write_to(&mut out)?;
                    writeln!(out)?;
                }
            }
        }
        Command::Query { run, item } => {
            let (inst, cfg, plan) = run.load()?;
            print_json(&answer_query(&inst, item, &cfg, &plan)?)?;
        }
        Command::Materialize { run } => {
            let (inst, cfg, plan) = run.load()?;
            let lca = LcaRun::new(&inst, &cfg, &plan)?;
            let part = partition(&inst, &cfg.epsilon);
            let chosen = lca.materialize_indexed(&SmallOrder::new(&inst, &part));
            let out = lca.outcome();
            print_json(&json!({
                "chosen": chosen,
                "value": display(&inst.profit_of(&chosen)),
                "feasible": inst.is_feasible(&chosen),
                "branch": lca.branch(),
                "summary": lca.summary(),
                "thresholds": out.sequence.thresholds().iter().map(display).collect::<Vec<_>>(),
                "params": out.params,
                "samples_drawn": out.account.samples_drawn,
            }))?;
        }
        Command::Solve { instance, oracle } => {
            let inst = KnapsackInstance::load(&instance)?;
            let kind = match oracle {
                OracleArg::Brute => OracleKind::Brute,
                OracleArg::Dp => OracleKind::Dp,
                OracleArg::Greedy => OracleKind::Greedy,
                OracleArg::Fractional => {
                    print_json(&json!({ "value": display(&fractional_greedy_value(&inst)) }))?;
                    return Ok(true);
                }
            };
            print_json(&solve(&inst, kind)?)?;
        }
        Command::Experiment { kind, instance, profile, n, epsilon, trials, seed, domain_bits, out, check } => {
            let seed = decode_seed(&seed)?;
            let epsilons = match (epsilon.is_empty(), kind) {
                (false, _) => epsilon,
                (true, ExperimentKind::Querycount) => vec!["1/3".to_string()],
                (true, _) => DEFAULT_EPSILONS.iter().map(|s| s.to_string()).collect(),
            };
            let source = match instance {
                Some(path) => InstanceSource::File { path: path.display().to_string() },
                None => InstanceSource::Generated(GeneratorSpec::new(profile.parse::<Profile>()?, n[0], seed.clone())),
            };
            let config = ExperimentConfig { source, epsilons, trials, seed, domain_bits };
            let ok = experiment(kind, config, &n, out.as_ref())?;
            return Ok(ok || !check);
        }
        Command::Hardness { family, n, x, beta, strategy, budget, trials, seed } => {
            let family: HardFamily = family.parse()?;
            match family {
                HardFamily::MaximalPair => {
                    let budget = budget.unwrap_or(n as u64 / 12);
                    let s: Box<dyn Strategy> = match strategy {
                        StrategyArg::AlwaysYes => Box::new(AlwaysYes),
                        StrategyArg::FullScan => Box::new(FullScan),
                        StrategyArg::RandomProbe => Box::new(RandomProbe { budget }),
                    };
                    print_json(&hardness::run_adversary(s.as_ref(), family, n, trials, budget, &decode_seed(&seed)?)?)?;
                }
                HardFamily::OrOptimal | HardFamily::OrApprox => {
                    let Some(x) = x else { bail!("--x is required for the OR families") };
                    let bits = x
                        .chars()
                        .map(|c| match c {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => bail!("--x must be a 0/1 string"),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let spec = match family {
                        HardFamily::OrOptimal => HardInstanceSpec::or_optimal(bits),
                        _ => HardInstanceSpec::or_approx(bits, parse_rational(&beta)?),
                    };
                    let mut out = io::stdout().lock();
                    hardness::generate(&spec)?.instance.write_to(&mut out)?;
                    writeln!(out)?;
                }
            }
        }
        Command::Rquantile { config, pairs, tau, rho, beta, domain_bits, seed, out, check } => {
            let mut bench = QuantileBenchmark::load(&config)?;
            if let Some(t) = tau {
                bench.tau = t;
            }
            if let Some(r) = rho {
                bench.rho = r;
            }
            if let Some(b) = beta {
                bench.beta = b;
            }
            if let Some(d) = domain_bits {
                bench.bits = d;
            }
            let rows = quantile_benchmark(&bench, pairs, &decode_seed(&seed)?)?;
            for r in &rows {
                eprintln!(
                    "[{}] {} p={}: agreement {:.4} accuracy failures {:.4}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.distribution,
                    r.p,
                    r.agreement_rate,
                    r.accuracy_failure_rate
                );
            }
            emit_rows(out.as_ref(), &rows)?;
            return Ok(rows.iter().all(|r| r.pass) || !check);
        }
        Command::Summarize { input } => summarize(&input)?,
    }
    io::stdout().flush()?;
    Ok(true)
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    let io = match e.downcast_ref::<lcakp::Error>() {
        Some(lcakp::Error::Io(io)) => Some(io),
        _ => e.downcast_ref::<io::Error>(),
    };
    io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_nested_rows() {
        let v: Value = serde_json::from_str(r#"{"a":1,"d":{"q":"7/18","t":2},"x":null}"#).unwrap();
        let mut row = Vec::new();
        flatten("", &v, &mut row);
        let keys: Vec<&str> = row.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["a", "d.q", "d.t", "x"]);
        assert_eq!(row[1].1, "7/18");
        assert_eq!(row[3].1, "");
    }

    #[test]
    fn seeds_are_hex() {
        assert_eq!(decode_seed("0xabcd").unwrap(), vec![0xab, 0xcd]);
        assert!(decode_seed("xyz").is_err());
    }
}
