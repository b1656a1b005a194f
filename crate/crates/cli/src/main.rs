//! Command-line front end: emit model level data, build group generators,
//! verify groups against the model, run finite-field sweeps, scan the
//! kernel-conjugacy property, and print dimension tables.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use markov_groups::conjtest::{
    distinct_small_subgroups, sampled_small_subgroups, scan_property_p_against,
};
use markov_groups::ffdyn::{
    compare_empirical, empirical_level_data, FamilyKind, PcfFamily, SweepConfig,
};
use markov_groups::groupcalc::{
    hausdorff_sequence, odometer_census, structure_report, verify_model, ElementSet, EnumConfig,
};
use markov_groups::markov::{combined_level_data, level_data, Mode};
use markov_groups::markovmap::build_generators;

#[derive(Parser)]
#[command(
    name = "markov-groups",
    about = "Markov models on factorization types of PCF quadratic polynomials, \
             and the matching permutation groups on binary rooted trees",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel sections (0 = rayon default, 1 = serial).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Memory cap in bytes for enumerations (env MARKOV_GROUPS_MEM_CAP
    /// overrides the default of 2 GiB).
    #[arg(long, global = true)]
    memory_cap: Option<u64>,
    /// TOML-style config file with `threads`, `memory_cap` and `seed` keys;
    /// explicit flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the primary output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

/// Defaults read from `--config`: a flat list of `key = value` lines,
/// `#` comments allowed.
#[derive(Default)]
struct FileConfig {
    threads: Option<usize>,
    memory_cap: Option<u64>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<FileConfig> {
        let mut cfg = FileConfig::default();
        let Some(path) = path else {
            return Ok(cfg);
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {path:?}"))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{path:?}:{}: expected `key = value`", lineno + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "threads" => cfg.threads = Some(value.parse().context("threads")?),
                "memory_cap" => cfg.memory_cap = Some(value.parse().context("memory_cap")?),
                "seed" => cfg.seed = Some(value.parse().context("seed")?),
                other => bail!("{path:?}:{}: unknown key {other:?}", lineno + 1),
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Even,
    Odd,
    Combined,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Print the level-n data of a model.
    Markov(MarkovArgs),
    /// Print the typed generators of the level-n model group as JSON.
    BuildGroup {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        n: u8,
    },
    /// Enumerate the model group and compare its cycle data with the model.
    Verify {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        n: u8,
        /// Also run the coset/quotient structure suite (n >= 3).
        #[arg(long)]
        structure: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Sweep primes and compare factorization types with the model.
    Empirical(EmpiricalArgs),
    /// Kernel-conjugacy checks.
    Conjtest {
        #[command(subcommand)]
        command: ConjCommand,
    },
    /// Dimension table: formula orders, enumeration cross-checks, ratios.
    Hausdorff {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        n_max: u8,
        /// Enumerate and cross-check orders up to this level.
        #[arg(long, default_value_t = 4)]
        enumerate_up_to: u8,
    },
    /// Count transitive elements of the full group by brute force (n <= 4).
    OdometerCensus {
        #[arg(long)]
        n: u8,
    },
}

#[derive(Args)]
struct MarkovArgs {
    #[arg(long)]
    model: u8,
    #[arg(long)]
    n: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Even)]
    mode: ModeArg,
    /// Use the deterministic restricted transitions (even mode only).
    #[arg(long)]
    restricted: bool,
    /// Collapse to cycle data before printing.
    #[arg(long)]
    collapse: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct EmpiricalArgs {
    /// Family: x2, x2m2 or x2m1 (conjugates of the square map, of the
    /// square minus two, of the square minus one).
    #[arg(long)]
    family: String,
    #[arg(long)]
    a: i64,
    #[arg(long)]
    level: u32,
    #[arg(long)]
    bound: u64,
    /// Prime class mod 4: 1 or 3.
    #[arg(long, default_value_t = 1)]
    class: u8,
    /// Seed for the factorization's random splitting.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw a fresh seed from the OS instead of the fixed default.
    #[arg(long)]
    fresh_randomness: bool,
    /// Emit CSV instead of the text table.
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum ConjCommand {
    /// Subgroup scan against the level-n model group: exhaustive through
    /// level 3, sampled above.
    Scan {
        #[arg(long)]
        model: u8,
        #[arg(long)]
        n: u8,
        /// Generator pairs to sample when the scan is not exhaustive.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
}

struct Settings {
    threads: usize,
    memory_cap: Option<u64>,
    seed: u64,
}

fn settings(cli: &Cli) -> Result<Settings> {
    let file = FileConfig::load(cli.config.as_ref())?;
    Ok(Settings {
        threads: cli.threads.or(file.threads).unwrap_or(0),
        memory_cap: cli.memory_cap.or(file.memory_cap),
        seed: file.seed.unwrap_or(0x5eed),
    })
}

fn enum_config(st: &Settings) -> EnumConfig {
    let mut cfg = EnumConfig::default();
    if st.threads == 1 {
        cfg.parallel = false;
    }
    if let Some(cap) = st.memory_cap {
        cfg.memory_cap_bytes = cap;
    } else if let Ok(env_cap) = std::env::var("MARKOV_GROUPS_MEM_CAP") {
        if let Ok(cap) = env_cap.parse() {
            cfg.memory_cap_bytes = cap;
        }
    }
    cfg
}

fn emit(cli: &Cli, text: String) -> Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {path:?}"))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let st = settings(&cli)?;

    #[cfg(feature = "parallel")]
    if st.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(st.threads)
            .build_global()
            .context("building thread pool")?;
    }

    match &cli.command {
        Command::Markov(args) => cmd_markov(&cli, args),
        Command::BuildGroup { model, n } => {
            let spec = build_generators(*model, *n)?;
            emit(&cli, serde_json::to_string_pretty(&spec)? + "\n")
        }
        Command::Verify {
            model,
            n,
            structure,
            format,
        } => cmd_verify(&cli, &st, *model, *n, *structure, *format),
        Command::Empirical(args) => cmd_empirical(&cli, &st, args),
        Command::Conjtest {
            command: ConjCommand::Scan { model, n, samples },
        } => cmd_conj_scan(&cli, &st, *model, *n, *samples),
        Command::Hausdorff {
            model,
            n_max,
            enumerate_up_to,
        } => cmd_hausdorff(&cli, &st, *model, *n_max, *enumerate_up_to),
        Command::OdometerCensus { n } => {
            let count = odometer_census(*n)?;
            let ambient = 1u64 << ((1u32 << *n) - 1);
            emit(
                &cli,
                format!(
                    "level {n}: {count} transitive elements of {ambient} total (ratio 1/2^{n})\n"
                ),
            )
        }
    }
}

fn cmd_markov(cli: &Cli, args: &MarkovArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::Even => Mode::Even,
        ModeArg::Odd => Mode::Odd,
        ModeArg::Combined => Mode::Combined,
    };
    let mut out = String::new();
    if matches!(mode, Mode::Combined) && !args.collapse && !args.restricted {
        // Show both halves separately, unnormalized, like the level tables.
        let both = combined_level_data(args.model, args.n)?;
        match args.format {
            Format::Json => {
                out.push_str(&serde_json::to_string_pretty(&serde_json::json!({
                    "level": args.n,
                    "mode": "combined",
                    "even": both.even,
                    "odd": both.odd,
                }))?);
                out.push('\n');
            }
            _ => {
                out.push_str(&format!(
                    "# model {} level {} even half\n",
                    args.model, args.n
                ));
                out.push_str(&both.even.to_table());
                out.push_str(&format!(
                    "# model {} level {} odd half\n",
                    args.model, args.n
                ));
                out.push_str(&both.odd.to_table());
            }
        }
        return emit(cli, out);
    }
    let data = level_data(args.model, args.n, mode, args.restricted)?;
    let mode_name = match (args.mode, args.restricted) {
        (ModeArg::Even, false) => "even",
        (ModeArg::Even, true) => "even-restricted",
        (ModeArg::Odd, _) => "odd",
        (ModeArg::Combined, _) => "combined",
    };
    if args.collapse {
        let cd = data.collapse_to_cycle_data();
        match args.format {
            Format::Json => {
                out.push_str(&serde_json::to_string_pretty(&cd)?);
                out.push('\n');
            }
            Format::Tsv => out.push_str(&cd.to_tsv()),
            Format::Text => out.push_str(&format!("{cd}\n")),
        }
    } else {
        match args.format {
            Format::Json => {
                out.push_str(&serde_json::to_string_pretty(
                    &data.to_json_value(mode_name),
                )?);
                out.push('\n');
            }
            _ => out.push_str(&data.to_table()),
        }
    }
    emit(cli, out)
}

fn cmd_verify(
    cli: &Cli,
    st: &Settings,
    model: u8,
    n: u8,
    structure: bool,
    format: Format,
) -> Result<()> {
    let cfg = enum_config(st);
    let t = Instant::now();
    let report = verify_model(model, n, &cfg)?;
    let mut ok = report.equal && report.order_observed == report.order_expected;
    let mut out = String::new();
    match format {
        Format::Json => {
            out.push_str(&serde_json::to_string_pretty(&report)?);
            out.push('\n');
        }
        _ => {
            out.push_str(&format!(
                "model {model} level {n}: order {} (expected {})\n",
                report.order_observed, report.order_expected
            ));
            out.push_str("cycle type\texpected\tobserved\n");
            for (p, d) in &report.expected.entries {
                let obs = report
                    .observed
                    .entries
                    .get(p)
                    .map(|d| d.to_string())
                    .unwrap_or_else(|| "-".into());
                out.push_str(&format!("{p}\t{d}\t{obs}\n"));
            }
            for (p, d) in &report.observed.entries {
                if !report.expected.entries.contains_key(p) {
                    out.push_str(&format!("{p}\t-\t{d}\n"));
                }
            }
            out.push_str(&format!("equal: {}\n", report.equal));
        }
    }
    if structure {
        let sr = structure_report(model, n, &cfg)?;
        ok &= sr.all_ok;
        match format {
            Format::Json => {
                out.push_str(&serde_json::to_string_pretty(&sr)?);
                out.push('\n');
            }
            _ => {
                for (label, good) in &sr.partition_checks {
                    out.push_str(&format!("partition {label}: {good}\n"));
                }
                for q in &sr.quotient_checks {
                    out.push_str(&format!(
                        "quotient {}: expected {:?}, observed {:?}\n",
                        q.label, q.expected, q.observed
                    ));
                }
                for c in &sr.coset_checks {
                    out.push_str(&format!("coset {}: equal {}\n", c.label, c.equal));
                }
                out.push_str(&format!("structure ok: {}\n", sr.all_ok));
            }
        }
    }
    if !matches!(format, Format::Json) {
        out.push_str(&format!("elapsed: {:?}\n", t.elapsed()));
    }
    emit(cli, out)?;
    if !ok {
        bail!("verification failed");
    }
    Ok(())
}

fn cmd_empirical(cli: &Cli, st: &Settings, args: &EmpiricalArgs) -> Result<()> {
    let kind = FamilyKind::parse(&args.family)?;
    let fam = PcfFamily::new(kind, args.a)?;
    let model = fam.model_id()?;
    let seed = if args.fresh_randomness {
        rand_seed()
    } else {
        args.seed.unwrap_or(st.seed)
    };
    let sweep = SweepConfig {
        parallel: st.threads != 1,
        seed,
    };
    let observed = empirical_level_data(&fam, args.level, args.bound, args.class, &sweep)?;
    let mode = if args.class == 1 {
        Mode::Even
    } else {
        Mode::Odd
    };
    let predicted = level_data(model, args.level, mode, false)?;
    let report = compare_empirical(&observed, &predicted)?;
    let mut out = String::new();
    if args.csv {
        out.push_str(&report.to_csv());
    } else {
        out.push_str(&format!(
            "family {:?} a={} model {model} level {} class {} mod 4: {} primes, {} excluded (seed {seed})\n",
            kind, args.a, args.level, args.class, observed.total_primes, observed.excluded.len()
        ));
        for row in &report.rows {
            out.push_str(&format!(
                "{}\t{}/{}\tpredicted {}/2^{}\tdev {:.5}{}\n",
                row.ftype,
                row.freq_num,
                row.freq_den,
                row.predicted_num,
                row.predicted_exp,
                row.deviation,
                if row.support_violation {
                    "\tNOT IN SUPPORT"
                } else {
                    ""
                }
            ));
        }
        out.push_str(&format!(
            "max deviation {:.5}, support violations {}\n",
            report.max_deviation, report.support_violations
        ));
    }
    emit(cli, out)?;
    if report.support_violations > 0 {
        bail!("observed factorization types outside the model support");
    }
    Ok(())
}

fn rand_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    // Cheap entropy for the --fresh-randomness escape hatch.
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.subsec_nanos() as u64 ^ d.as_secs())
        .unwrap_or(0);
    nanos ^ std::process::id() as u64
}

fn cmd_conj_scan(cli: &Cli, st: &Settings, model: u8, n: u8, samples: usize) -> Result<()> {
    let cfg = enum_config(st);
    let subgroups = if n <= 3 {
        distinct_small_subgroups(n, &cfg)?
    } else {
        sampled_small_subgroups(n, samples, 0x57a7, &cfg)?
    };
    let spec = build_generators(model, n)?;
    let g = ElementSet::closure(&spec.verification_gens(), &cfg)?;
    let report = scan_property_p_against(model, &g, &subgroups, &cfg)?;
    let mut out = serde_json::to_string_pretty(&report)?;
    out.push('\n');
    emit(cli, out)?;
    if !report.violations.is_empty() {
        bail!("{} equivalence violations found", report.violations.len());
    }
    Ok(())
}

fn cmd_hausdorff(
    cli: &Cli,
    st: &Settings,
    model: u8,
    n_max: u8,
    enumerate_up_to: u8,
) -> Result<()> {
    let cfg = enum_config(st);
    let rows = hausdorff_sequence(model, n_max, enumerate_up_to, &cfg)?;
    let mut out = String::from("n\tlog2|G_n|\tlog2|W_n|\tenumerated\tratio\n");
    let mut ok = true;
    for row in &rows {
        let (num, den) = row.ratio();
        let enumerated = match row.log2_enumerated {
            Some(e) => {
                if e != row.log2_group_order {
                    ok = false;
                }
                e.to_string()
            }
            None => "-".into(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}/{}\n",
            row.n, row.log2_group_order, row.log2_ambient_order, enumerated, num, den
        ));
    }
    emit(cli, out)?;
    if !ok {
        bail!("enumerated order disagrees with the formula");
    }
    Ok(())
}
