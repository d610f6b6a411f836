fn main() {
    let code = gated_idm::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
