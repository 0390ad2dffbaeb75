//! Loading the on-disk formats: feature stores (binary or CSV), task tables
//! (per-class or compositional) and named splits, plus importing a split
//! given as 1-based row indices.

use std::path::PathBuf;

use tafenet::data::{import_index_split, load_features, load_tasks, Dataset};

fn main() -> tafenet::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/reference");
    let ds = Dataset::load(dir.join("features.bin"), dir.join("tasks.json"), dir.join("split.json"))?;
    println!(
        "{} samples of dimension {}, {} classes ({} seen, {} unseen)",
        ds.store.len(),
        ds.store.dim(),
        ds.tasks.len(),
        ds.seen().len(),
        ds.unseen().len()
    );
    assert_eq!(load_features(dir.join("features.csv"))?, ds.store);

    let pairs = load_tasks(dir.join("composition_tasks.json"))?;
    for (i, name) in pairs.names().iter().enumerate() {
        println!("pair {name:>8}: {:?}", pairs.vector(i));
    }

    // rows 1-4 hold owl and cat, rows 5-8 bat and eel
    let names = ds.tasks.names().to_vec();
    let split = import_index_split(ds.store.labels(), &names, &[1, 3], &[2, 4], &[5, 6, 7, 8])?;
    println!("imported split: seen {:?}, unseen {:?}", split.seen, split.unseen);
    Ok(())
}
