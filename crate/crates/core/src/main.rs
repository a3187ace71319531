fn main() {
    std::process::exit(weaklabel::cli::run(std::env::args_os()));
}
