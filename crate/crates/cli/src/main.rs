fn main() {
    std::process::exit(ctgraph_cli::run(std::env::args_os()));
}
