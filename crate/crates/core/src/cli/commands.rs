use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::{
    load, resolve, EvalCommandConfig, FeaturesCommandConfig, GenDataConfig, SimulateConfig,
    TrainCommandConfig,
};
use super::{Cli, CommandError};
use crate::container;
use crate::data::{generate_range, load_dataset, save_dataset, Dataset};
use crate::features::{log_mel, read_wav};
use crate::layers::simulate_neuron;
use crate::training::{
    evaluate, gradient_diagnostics, grid_table, load_checkpoint, replacement_grid,
    save_checkpoint, train_run_with, DiagnosticsConfig, DirectionCheck,
};

type CmdResult = Result<(), CommandError>;

fn io_err(path: &Path, e: std::io::Error) -> CommandError {
    CommandError::runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn to_toml<T: serde::Serialize>(value: &T) -> Result<String, CommandError> {
    toml::to_string(value).map_err(|e| CommandError::runtime(e.to_string()))
}

fn split(config: &GenDataConfig) -> crate::Result<(Dataset, Dataset)> {
    Ok((
        generate_range(&config.synth, 0, config.train)?,
        generate_range(&config.synth, config.train, config.test)?,
    ))
}

pub(super) fn gen_data(cli: &Cli) -> CmdResult {
    let (mut config, _) = load::<GenDataConfig>(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
    }
    let (train, test) = split(&config)?;
    save_dataset(cli.out.join("train"), &train)?;
    save_dataset(cli.out.join("test"), &test)?;
    write_file(&cli.out.join("gen-data.toml"), &to_toml(&config)?)?;
    println!(
        "wrote {} train and {} test utterances to {}",
        train.len(),
        test.len(),
        cli.out.display()
    );
    Ok(())
}

fn train_data(config: &TrainCommandConfig, base: &Path) -> crate::Result<(Dataset, Dataset)> {
    match &config.data {
        Some(dir) => {
            let dir = resolve(base, dir);
            Ok((load_dataset(dir.join("train"))?, load_dataset(dir.join("test"))?))
        }
        None => split(&config.synthetic),
    }
}

fn load_train_config(cli: &Cli) -> Result<(TrainCommandConfig, Dataset, Dataset), CommandError> {
    let (mut config, base) = load::<TrainCommandConfig>(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    config.train.validate()?;
    let (train, test) = train_data(&config, &base)?;
    Ok((config, train, test))
}

pub(super) fn train(cli: &Cli) -> CmdResult {
    let (config, train, test) = load_train_config(cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    write_file(&cli.out.join("config.toml"), &to_toml(&config)?)?;
    let metrics_path = cli.out.join("metrics.txt");
    let file = fs::File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?;
    let mut sink = BufWriter::new(file);
    let mut write_error = None;
    writeln!(sink, "# step loss grad_norm spike_rate").map_err(|e| io_err(&metrics_path, e))?;
    let outcome = train_run_with(&config.train, &train, &test, &mut |line| {
        if write_error.is_none() {
            if let Err(e) = writeln!(sink, "{line}") {
                write_error = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error {
        return Err(io_err(&metrics_path, e));
    }
    sink.flush().map_err(|e| io_err(&metrics_path, e))?;
    save_checkpoint(&cli.out, &outcome.params)?;
    let m = &outcome.metrics;
    if let Some(report) = m.final_report() {
        write_file(&cli.out.join("report.txt"), &format!("{}\n", report.to_line()))?;
        println!(
            "{}: token error rate {:.4} [{:.4}, {:.4}] (untrained {:.4})",
            m.label,
            report.rate,
            report.interval_low,
            report.interval_high,
            m.control.map_or(f64::NAN, |c| c.rate)
        );
    }
    if let Some(step) = m.diverged_step {
        return Err(CommandError::runtime(format!(
            "training diverged at step {step}; partial checkpoint saved in {}",
            cli.out.display()
        )));
    }
    Ok(())
}

pub(super) fn eval(cli: &Cli) -> CmdResult {
    let (config, base) = load::<EvalCommandConfig>(cli.config.as_deref())?;
    let params = load_checkpoint(resolve(&base, &config.checkpoint))?;
    let data = load_dataset(resolve(&base, &config.data))?;
    let result = evaluate(&params, &data, config.batch_size)?;
    let mut hyps = String::new();
    for h in &result.hypotheses {
        let line: Vec<String> = h.iter().map(usize::to_string).collect();
        writeln!(hyps, "{}", line.join(" ")).unwrap();
    }
    write_file(&cli.out.join("hypotheses.txt"), &hyps)?;
    write_file(&cli.out.join("report.txt"), &format!("{}\n", result.report.to_line()))?;
    println!(
        "token error rate {:.4} [{:.4}, {:.4}] over {} tokens, mean loss {:.4}",
        result.report.rate,
        result.report.interval_low,
        result.report.interval_high,
        result.report.n,
        result.mean_loss
    );
    Ok(())
}

pub(super) fn grid(cli: &Cli) -> CmdResult {
    let (config, train, test) = load_train_config(cli)?;
    let rows = replacement_grid(&config.train, &train, &test, cli.jobs, &|row| {
        let neurons = if row.spiking { "spiking" } else { "nonspiking" };
        eprintln!("finished {} ({neurons}), diverged: {}", row.label(), row.metrics.diverged);
    })?;
    for (i, row) in rows.iter().enumerate() {
        let neurons = if row.spiking { "spiking" } else { "nonspiking" };
        let dir = cli.out.join("runs").join(format!("{i}-{}-{neurons}", row.replaced));
        write_file(&dir.join("metrics.txt"), &row.metrics.to_text())?;
    }
    let table = grid_table(&rows);
    write_file(&cli.out.join("results.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

pub(super) fn diagnose(cli: &Cli) -> CmdResult {
    let (mut config, _) = load::<DiagnosticsConfig>(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        let n = config.seeds.len() as u64;
        config.seeds = (seed..seed + n).collect();
    }
    let summaries = gradient_diagnostics(&config)?;
    let mut summary = String::from("variant\tseed\tinitial_norm\tmax_norm\tmedian_norm\tcrossed_bound\tsteps\n");
    let mut traces = String::from("variant\tseed\tstep\tgrad_norm\n");
    for s in &summaries {
        writeln!(summary, "{}", s.to_line()).unwrap();
        for (i, n) in s.trace.iter().enumerate() {
            writeln!(traces, "{}\t{}\t{}\t{n}", s.variant.name(), s.seed, i + 1).unwrap();
        }
    }
    write_file(&cli.out.join("summary.tsv"), &summary)?;
    write_file(&cli.out.join("traces.tsv"), &traces)?;
    print!("{summary}");
    let check = DirectionCheck::from_summaries(&summaries);
    println!(
        "spiking runs crossing the bound: {}; nonspiking maximum larger on {} of {} seeds",
        check.spiking_crossings, check.nonspiking_larger, check.seeds
    );
    Ok(())
}

pub(super) fn simulate(cli: &Cli) -> CmdResult {
    let (config, _) = load::<SimulateConfig>(cli.config.as_deref())?;
    let inputs = config.inputs()?;
    let surrogate = config.surrogate();
    surrogate
        .validate()
        .map_err(|e| CommandError::usage(e.to_string()))?;
    let trace = simulate_neuron(
        config.alpha,
        surrogate,
        &config.weights,
        &inputs,
        config.bias,
        config.recurrent,
    )
    .map_err(|e| CommandError::usage(e.to_string()))?;
    let mut out = String::from("t\tI\tu\ts\n");
    for t in 0..trace.membrane.len() {
        writeln!(
            out,
            "{t}\t{}\t{}\t{}",
            trace.current[t], trace.membrane[t], trace.spikes[t]
        )
        .unwrap();
    }
    write_file(&cli.out.join("trace.tsv"), &out)?;
    let spikes = trace.spikes.iter().filter(|&&s| s == 1.0).count();
    println!("{} steps, {spikes} spikes", trace.membrane.len());
    Ok(())
}

pub(super) fn features(cli: &Cli) -> CmdResult {
    let (config, base) = load::<FeaturesCommandConfig>(cli.config.as_deref())?;
    let path = resolve(&base, &config.input);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let clip = read_wav(&bytes).map_err(|e| CommandError::runtime(format!("{}: {e}", path.display())))?;
    let feats = log_mel(&clip, &config.features)?;
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    container::save(cli.out.join("features.bin"), &[("log_mel".to_string(), feats.clone())])?;
    println!("{} frames x {} mel bands", feats.shape()[0], feats.shape()[1]);
    Ok(())
}
