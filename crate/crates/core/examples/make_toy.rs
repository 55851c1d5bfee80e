//! Writes the synthetic toy treebank splits to a directory (default
//! `data/toy`).

use std::fs;
use std::path::PathBuf;

use dctree::synth::{toy_splits, toy_treebank_lines};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy".into()));
    fs::create_dir_all(&dir)?;
    for (name, config) in toy_splits() {
        let mut text = toy_treebank_lines(&config).join("\n");
        text.push('\n');
        let path = dir.join(format!("{name}.txt"));
        fs::write(&path, text)?;
        println!("{} ({} sentences)", path.display(), config.samples);
    }
    Ok(())
}
