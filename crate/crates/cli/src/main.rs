fn main() {
    if let Err(e) = uvtomo_cli::run_args(std::env::args_os()) {
        let msg = e.to_string();
        eprintln!("uvtomo: {}", msg.lines().next().unwrap_or_default());
        std::process::exit(e.exit_code());
    }
}
