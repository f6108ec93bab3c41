fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("NEPBE_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("NEPBE_THREADS ignored: {e}");
        }
    }
    std::process::exit(nepbe::cli::run_cli(std::env::args_os()));
}
