fn main() {
    let code = nested_flow::experiments::cli::main_with_args(std::env::args().collect());
    std::process::exit(code);
}
