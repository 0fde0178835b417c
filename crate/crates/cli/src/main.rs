fn main() {
    std::process::exit(acllft::run(std::env::args_os()));
}
