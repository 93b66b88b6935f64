//! Writes the seeded balanced MDPs to `data/balanced/` (or the directory
//! given as the first argument).

use std::path::{Path, PathBuf};

use diatomic_dp::corpus::balanced_corpus;
use diatomic_dp::mdp::is_balanced;
use diatomic_dp::Result;

pub fn run_example(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for entry in balanced_corpus().into_iter().filter(|e| e.seed.is_some()) {
        assert!(is_balanced(&entry.mdp, 1e-9)?, "{} is not balanced", entry.name);
        let path = dir.join(format!("{}.json", entry.name));
        std::fs::write(&path, entry.mdp.to_json_string())?;
        println!("{} (seed {:?}, γ = {})", path.display(), entry.seed, entry.mdp.gamma());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/balanced"));
    run_example(&dir)
}
