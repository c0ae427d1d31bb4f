//! `art` command-line tool.
//!
//! Exit codes: 0 success or certified, 1 not certified or violations found,
//! 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use art_core::demo::{demo_config, demo_network, demo_property};
use art_core::diffnet::{parse_network, write_network};
use art_core::oracle::{
    label_with_oracle, mc_soundness, read_dataset_csv, sample_violations, write_dataset_csv,
    LabelPolarity,
};
use art_core::property::{parse_properties, CorrectnessProperty, OutputPredicate};
use art_core::{
    art_train, certify_only, ArtError, CertifyOutcome, Dataset, LrDecay, Network, OptimizerKind,
    RegionSet, TrainConfig, TrainReport,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "art",
    version,
    about = "Correct-by-construction training of ReLU networks"
)]
struct Cli {
    /// Maximum worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the two-input radar example until it provably reports objects ahead.
    Demo(DemoArgs),
    /// Write a randomly initialized network.
    Init(InitArgs),
    /// Sample inputs from a box and label them with an oracle network.
    GenData(GenDataArgs),
    /// Train a network against correctness properties and optional data.
    Train(TrainArgs),
    /// Try to prove properties by input splitting, without changing weights.
    Certify(CertifyArgs),
    /// Monte-Carlo audit of a network against properties.
    Audit(AuditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Args)]
struct DemoArgs {
    /// Train on the unrefined input box only.
    #[arg(long)]
    no_refine: bool,
    /// Replace the property with the unsatisfiable `P ∧ ¬P`.
    #[arg(long)]
    contradiction: bool,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    region_cap: usize,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[arg(long, value_enum, default_value = "sgd")]
    optimizer: OptimizerArg,
    /// Write the trained network here.
    #[arg(long)]
    out_net: Option<PathBuf>,
}

#[derive(Args)]
struct InitArgs {
    /// Layer widths including input and output, e.g. `2,8,8,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Argmax,
    Argmin,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    oracle: PathBuf,
    /// Property file whose first input box is sampled.
    #[arg(long)]
    property: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_train: usize,
    #[arg(long, default_value_t = 5_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "argmax")]
    polarity: PolarityArg,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Starting network. Without it a fresh network is drawn from `--seed`
    /// with hidden widths `--hidden`.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long)]
    property: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for `network.txt`, `report.csv`, `report.json` and `splits.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 5000)]
    region_cap: usize,
    #[arg(long, default_value_t = 0.3)]
    eps_accuracy: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable plateau learning-rate decay.
    #[arg(long)]
    no_decay: bool,
    #[arg(long)]
    no_refine: bool,
    /// Slack required on strict output inequalities.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Record wall-clock seconds in the reports (makes them non-reproducible).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    property: PathBuf,
    /// Maximum number of bisections.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    property: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Counterexamples to print per property.
    #[arg(long, default_value_t = 10)]
    show: usize,
}

type CliResult = Result<ExitCode, ArtError>;

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn read(path: &Path) -> Result<String, ArtError> {
    fs::read_to_string(path).map_err(|e| {
        ArtError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn with_file<T>(path: &Path, r: Result<T, ArtError>) -> Result<T, ArtError> {
    r.map_err(|e| match e {
        ArtError::Parse { line, message } => ArtError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn load_network(path: &Path) -> Result<Network, ArtError> {
    with_file(path, parse_network(&read(path)?))
}

fn load_properties(path: &Path) -> Result<Vec<CorrectnessProperty>, ArtError> {
    let props = with_file(path, parse_properties(&read(path)?))?;
    if props.is_empty() {
        return Err(ArtError::Usage(format!(
            "{} holds no properties",
            path.display()
        )));
    }
    Ok(props)
}

fn print_epochs(report: &TrainReport) {
    println!(
        "{:>5}  {:>14}  {:>14}  {:>7}",
        "epoch", "loss_d", "loss_a", "regions"
    );
    for e in &report.epochs {
        println!(
            "{:>5}  {:>14.8}  {:>14.8}  {:>7}",
            e.epoch, e.loss_d, e.loss_a, e.regions
        );
    }
}

fn print_train_summary(report: &TrainReport) {
    println!(
        "result: {} steps={} regions={} splits={} loss_d={} loss_a={}",
        if report.certified() {
            "certified"
        } else {
            "not-certified"
        },
        report.optimizer_steps,
        report.final_regions,
        report.splits,
        report.final_loss_d,
        report.final_loss_a
    );
}

fn cmd_demo(args: DemoArgs) -> CliResult {
    let net = demo_network();
    let mut property = demo_property();
    if args.contradiction {
        property.output =
            OutputPredicate::and(vec![property.output.clone(), property.output.negate()])?;
    }
    let cfg = TrainConfig {
        lr: args.lr,
        k: args.k,
        region_cap: args.region_cap,
        max_epochs: args.max_epochs,
        optimizer: args.optimizer.into(),
        refine: !args.no_refine,
        ..demo_config()
    };
    let mut set = RegionSet::from(property);
    let (trained, report) = art_train(net, &mut set, &Dataset::default(), &cfg)?;
    print_epochs(&report);
    print_train_summary(&report);
    if let Some(path) = &args.out_net {
        fs::write(path, write_network(&trained))?;
    }
    Ok(verdict(report.certified()))
}

fn cmd_init(args: InitArgs) -> CliResult {
    let net = Network::random(&args.dims, args.seed)?;
    fs::write(&args.out, write_network(&net))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_data(args: GenDataArgs) -> CliResult {
    let oracle = load_network(&args.oracle)?;
    let props = load_properties(&args.property)?;
    let polarity = match args.polarity {
        PolarityArg::Argmax => LabelPolarity::ArgMax,
        PolarityArg::Argmin => LabelPolarity::ArgMin,
    };
    let (train, test) = label_with_oracle(
        &oracle,
        args.n_train,
        args.n_test,
        &props[0].input,
        args.seed,
        polarity,
    )?;
    let d = oracle.input_dim();
    let train_csv = write_dataset_csv(&train, d)?;
    let test_csv = write_dataset_csv(&test, d)?;
    fs::write(&args.train_out, train_csv)?;
    if let Some(p) = &args.test_out {
        fs::write(p, test_csv)?;
    }
    println!(
        "wrote {} training and {} test samples",
        train.len(),
        test.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let props = load_properties(&args.property)?;
    let net = match &args.net {
        Some(p) => load_network(p)?,
        None => {
            let d = props[0].input.dim();
            let e = props[0].output.output_dim()?;
            let mut dims = vec![d];
            dims.extend(&args.hidden);
            dims.push(e);
            Network::random(&dims, args.seed)?
        }
    };
    let data = match &args.data {
        Some(p) => with_file(p, read_dataset_csv(&read(p)?))?,
        None => Dataset::default(),
    };
    let cfg = TrainConfig {
        lr: args.lr,
        k: args.k,
        region_cap: args.region_cap,
        eps_accuracy: args.eps_accuracy,
        max_epochs: args.max_epochs,
        optimizer: args.optimizer.into(),
        lr_decay: if args.no_decay {
            LrDecay::None
        } else {
            TrainConfig::default().lr_decay
        },
        seed: args.seed,
        refine: !args.no_refine,
        ..TrainConfig::default()
    };
    if !(args.margin.is_finite() && args.margin >= 0.0) {
        return Err(ArtError::Usage(
            "margin must be a non-negative number".into(),
        ));
    }
    let mut set = RegionSet::new(props).with_options(art_core::LossOptions {
        margin: args.margin,
    });
    let (trained, report) = art_train(net, &mut set, &data, &cfg)?;

    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("network.txt"), write_network(&trained))?;
    fs::write(
        args.out_dir.join("report.csv"),
        report.to_csv(args.wall_clock),
    )?;
    fs::write(
        args.out_dir.join("report.json"),
        report.summary_json(&cfg, args.wall_clock),
    )?;
    fs::write(args.out_dir.join("splits.csv"), set.split_log_csv())?;
    print_train_summary(&report);
    if !data.is_empty() {
        println!("training accuracy: {:.4}", data.accuracy(&trained));
    }
    Ok(verdict(report.certified()))
}

fn cmd_certify(args: CertifyArgs) -> CliResult {
    let net = load_network(&args.net)?;
    let props = load_properties(&args.property)?;
    let mut set = RegionSet::new(props);
    let outcome = certify_only(&net, &mut set, args.budget)?;
    match outcome {
        CertifyOutcome::Certified { splits } => {
            println!("result: certified splits={splits} regions={}", set.len());
        }
        CertifyOutcome::Unknown { max_loss, splits } => {
            println!(
                "result: unknown splits={splits} regions={} max_loss={max_loss}",
                set.len()
            );
        }
    }
    Ok(verdict(outcome.is_certified()))
}

fn cmd_audit(args: AuditArgs) -> CliResult {
    if args.samples == 0 {
        return Err(ArtError::Usage("--samples must be at least 1".into()));
    }
    let net = load_network(&args.net)?;
    let props = load_properties(&args.property)?;
    let mut clean = true;
    for (i, p) in props.iter().enumerate() {
        let bound_violations = mc_soundness(&net, &p.input, args.samples, args.seed)?;
        let cex = sample_violations(&net, p, args.samples, args.seed)?;
        println!(
            "property {i}: samples={} bound_violations={} property_violations={}",
            args.samples,
            bound_violations.len(),
            cex.len()
        );
        for c in cex.iter().take(args.show) {
            println!(
                "  counterexample input={:?} output={:?} distance={}",
                c.input, c.output, c.distance
            );
        }
        clean &= bound_violations.is_empty() && cex.is_empty();
    }
    println!("result: {}", if clean { "clean" } else { "violations" });
    Ok(verdict(clean))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Demo(a) => cmd_demo(a),
        Command::Init(a) => cmd_init(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Audit(a) => cmd_audit(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
