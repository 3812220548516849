use clap::Parser;

fn main() -> anyhow::Result<()> {
    cips3d_cli::init_threads()?;
    cips3d_cli::run(cips3d_cli::Cli::parse())
}
