fn main() {
    std::process::exit(spfun::cli::main());
}
