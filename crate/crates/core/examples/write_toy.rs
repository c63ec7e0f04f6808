//! Writes the toy model, its synthetic PGM lines and `truth.tsv`.
//!
//!     cargo run -p qbilstm --example write_toy -- <out-dir>

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "toy".into());
    match qbilstm::toy::write_toy_bundle(&dir) {
        Ok(b) => println!(
            "model: {}\nimages: {}\ntruth: {}",
            b.model.display(),
            b.images.display(),
            b.truth.display()
        ),
        Err(e) => {
            eprintln!("write_toy: {e}");
            std::process::exit(2);
        }
    }
}
