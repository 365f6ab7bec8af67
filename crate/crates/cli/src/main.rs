fn main() {
    std::process::exit(alphafair::main_with_args(std::env::args_os()));
}
