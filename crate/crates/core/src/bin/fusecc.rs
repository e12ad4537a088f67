use fusecc::cli::run_command;

fn main() {
    std::process::exit(run_command(std::env::args_os()));
}
