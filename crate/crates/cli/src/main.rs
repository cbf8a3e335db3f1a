fn main() {
    let outcome = riskboard_cli::run(std::env::args_os());
    if outcome.code == riskboard_cli::EXIT_ERROR {
        eprint!("{}", outcome.output);
    } else {
        print!("{}", outcome.output);
    }
    std::process::exit(outcome.code);
}
