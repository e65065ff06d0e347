use clap::Parser;

fn main() {
    let cli = mview::cli::Cli::parse();
    match mview::cli::run(&cli) {
        Ok(message) => println!("{message}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
