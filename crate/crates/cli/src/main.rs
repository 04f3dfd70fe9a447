use clap::Parser;

fn main() {
    masv::init_logging();
    std::process::exit(masv::execute(masv::Cli::parse()));
}
