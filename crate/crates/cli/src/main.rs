mod args;
mod attacks;
mod commands;
mod error;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Attack(c) => commands::attack(c),
        Command::Sweep(c) => commands::sweep(c),
        Command::Robustness(c) => commands::robustness(c),
        Command::TrainToy(c) => commands::train(c),
        Command::GenData(c) => commands::gen_data(c),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
