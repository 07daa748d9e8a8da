fn main() {
    std::process::exit(reprompt_control::cli::main());
}
