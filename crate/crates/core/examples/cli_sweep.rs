// Drive the command-line front end from code: a small stability sweep with
// CSV, SVG and a checksummed manifest.

use sgdphaselab::cli::{parse_args, run_command};

pub fn run_example() -> sgdphaselab::Result<()> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("sweep");
    let cfg = parse_args([
        "sgdphaselab", "stability-map",
        "--nu", "1.5", "--kappa", "1", "--modes", "80", "--steps", "300",
        "--grid-alpha", "0.1:3.5:12", "--grid-beta", "-0.5:0.9:8",
        "--plot", "--out", out.to_str().expect("utf-8 temp path"),
    ])?;
    let outcome = run_command(&cfg)?;
    for f in &outcome.files {
        let len = std::fs::metadata(out.join(f))?.len();
        println!("{f:<22} {len:>7} bytes");
    }
    let csv = std::fs::read_to_string(out.join("stability_map.csv"))?;
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> sgdphaselab::Result<()> {
    run_example()
}
