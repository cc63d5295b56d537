fn main() {
    std::process::exit(bsn_disg::cli::run(std::env::args_os()));
}
