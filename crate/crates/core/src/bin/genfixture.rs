//! Regenerates the committed synthetic fixtures deterministically.
//!
//! Usage: genfixture [OUT_DIR]
//!
//! Writes all five fixture CSVs into OUT_DIR (default: the current
//! directory), overwriting what is there. The generators are seeded, so
//! the output is byte-identical on every run; a guard test compares the
//! committed files against fresh generator output.

use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = args.get(1).map(String::as_str).unwrap_or(".");
    if args.len() > 2 {
        eprintln!("error[config]: expected at most one argument (the output directory)");
        std::process::exit(2);
    }
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("error[io]: cannot create {dir}: {e}");
        std::process::exit(4);
    }
    if let Err(e) = regimelab::synthetic::write_fixtures(Path::new(dir)) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
    for name in [
        regimelab::synthetic::MACRO_FIXTURE,
        regimelab::synthetic::GROUPS_FIXTURE,
        regimelab::synthetic::ETF_FIXTURE,
        regimelab::synthetic::WALK_FACTORS_FIXTURE,
        regimelab::synthetic::WALK_ASSETS_FIXTURE,
    ] {
        println!("wrote {}", Path::new(dir).join(name).display());
    }
}
