use clap::Parser;
use rpnet_cli::Cli;

/// `RPNET_THREADS` caps the worker pool; unset means one per core.
#[cfg(feature = "parallel")]
fn init_pool() -> Result<(), String> {
    let Ok(v) = std::env::var("RPNET_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| format!("RPNET_THREADS={v:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
fn init_pool() -> Result<(), String> {
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_pool() {
        eprintln!("rpnet: {e}");
        std::process::exit(2);
    }
    std::process::exit(rpnet_cli::run(&cli));
}
