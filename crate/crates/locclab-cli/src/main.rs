fn main() {
    std::process::exit(locclab_cli::run(std::env::args_os()));
}
