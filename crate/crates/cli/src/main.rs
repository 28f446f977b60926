fn main() {
    std::process::exit(rayclass_cli::run(std::env::args_os()));
}
