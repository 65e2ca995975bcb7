fn main() {
    std::process::exit(ray_termination::cli::run(std::env::args_os()));
}
