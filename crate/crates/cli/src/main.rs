fn main() {
    std::process::exit(lre_prune::run(std::env::args_os()));
}
