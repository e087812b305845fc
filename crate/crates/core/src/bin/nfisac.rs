//! `nfisac` command-line tool; see `nfisac --help`.

fn main() {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Trace)
        .parse_default_env()
        .init();
    std::process::exit(nfisac::cli::run(std::env::args_os()));
}
