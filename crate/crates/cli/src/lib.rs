//! Command-line entry points and the live streaming service.

pub mod cli;
pub mod commands;
pub mod config;
pub mod server;
pub mod stream;

use cli::{Cli, Command};

pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Run(a) => commands::run_cmd(a),
        Command::Compare(a) => commands::compare_cmd(a),
        Command::SafetySuite(a) => commands::suite_cmd(a),
        Command::Serve(a) => commands::serve_cmd(a),
        Command::Scenario => commands::scenario_cmd(),
    }
}
