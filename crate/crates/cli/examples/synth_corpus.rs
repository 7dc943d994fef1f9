//! Writes a planted-signal demo corpus: `cargo run --example synth_corpus -- <dir>`.

use leaning::synthetic::{generate, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo-input".to_string());
    let corpus = generate(&SyntheticConfig {
        n_center: 20,
        n_off_topic: 30,
        ..SyntheticConfig::default()
    });
    let files = corpus.write_inputs(std::path::Path::new(&dir))?;
    println!("{}", files.speeches.display());
    println!("{}", files.registry.display());
    println!("{}", files.keywords.display());
    println!("{}", files.stopwords.display());
    Ok(())
}
