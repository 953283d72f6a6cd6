//! Writes a synthetic dataset in the semicolon-separated layout of the real
//! file, for trying the pipeline without it.
//!
//! cargo run -p absenteeism-core --example synthetic_csv -- out.csv [rows] [seed]

use std::fs::File;
use std::io::BufWriter;

use absenteeism_core::ingest::write_dataset;
use absenteeism_core::synthetic::generate_raw;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: synthetic_csv <out.csv> [rows] [seed]")?;
    let rows: usize = args.next().map_or(Ok(740), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    write_dataset(&generate_raw(rows, seed), b';', BufWriter::new(File::create(&path)?))?;
    eprintln!("wrote {rows} rows to {path}");
    Ok(())
}
