use std::io;

use modkal_cli::{run_cli, CONFIG_ENV};

fn main() {
    let code = run_cli(
        std::env::args_os(),
        std::env::var_os(CONFIG_ENV),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
