fn main() {
    std::process::exit(mimo_sched::cli::run(std::env::args_os()));
}
