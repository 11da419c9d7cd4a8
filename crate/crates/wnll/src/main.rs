use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use wnll::config::{RunConfig, KEYS, TOOL_VERSION};
use wnll::experiments;
use wnll::Result;

/// Per-command defaults layered over the built-in ones.
fn command_defaults(name: &str) -> &'static [(&'static str, &'static str)] {
    match name {
        "table1" => &[("dataset", "data/mnist-10k"), ("n_train", "8000"), ("n_test", "2000")],
        _ => &[],
    }
}

fn flag_name(key: &str) -> &'static str {
    Box::leak(key.replace('_', "-").into_boxed_str())
}

fn subcommand(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name)
        .args_override_self(true)
        .about(about)
        .arg(Arg::new("config").long("config").value_name("FILE").help("key = value settings file"))
        .arg(Arg::new("out").long("out").value_name("DIR").help("output directory [default: out/<command>]"));
    for &(key, default, help) in KEYS {
        let help = if default.is_empty() { help.to_string() } else { format!("{help} [default: {default}]") };
        cmd = cmd.arg(Arg::new(key).long(flag_name(key)).value_name("VALUE").help(help));
    }
    cmd
}

fn cli() -> Command {
    Command::new("wnll")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Graph-based label interpolation with the weighted nonlocal Laplacian")
        .subcommand_required(true)
        .subcommand(subcommand("table1", "softmax regression vs WNLL interpolation on one split"))
        .subcommand(subcommand("train", "alternating linear/WNLL training of the toy network"))
        .subcommand(subcommand("eval", "WNLL prediction with a trained checkpoint"))
        .subcommand(subcommand("coupon", "labeled samples needed to cover every class"))
        .subcommand(subcommand("graph-dump", "write the kNN weight graph as an edge list"))
}

fn resolve(name: &str, m: &ArgMatches) -> Result<(RunConfig, PathBuf)> {
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|&(key, _, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect();
    let file = m.get_one::<String>("config").map(Path::new);
    let cfg = RunConfig::resolve(command_defaults(name), file, &flags)?;
    let out = m.get_one::<String>("out").map_or_else(|| Path::new("out").join(name), PathBuf::from);
    Ok((cfg, out))
}

fn run(name: &str, m: &ArgMatches) -> Result<()> {
    let (cfg, out) = resolve(name, m)?;
    match name {
        "table1" => {
            let t = experiments::table1(&cfg, &out)?;
            for r in &t.rows {
                println!("{:<10} {:.4}", r.method, r.accuracy);
            }
        }
        "train" => {
            let t = experiments::train(&cfg, &out)?;
            println!("{} stages written to {}", t.summary.stages, out.display());
            println!("final: wnll_accuracy={:.4} linear_accuracy={:.4}", t.summary.wnll_accuracy, t.summary.linear_accuracy);
        }
        "eval" => {
            let s = experiments::eval(&cfg, &out)?;
            println!("accuracy={:.4} on {} points", s.accuracy, s.points);
        }
        "coupon" => {
            for r in experiments::coupon(&cfg, &out)? {
                println!("N={:<4} exact={:.4} simulated={:.4} ± {:.4}", r.N, r.exact, r.simulated, r.stderr);
            }
        }
        "graph-dump" => {
            let edges = experiments::graph_dump(&cfg, &out)?;
            println!("{edges} edges written to {}", out.join("graph.csv").display());
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{TOOL_VERSION}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
