//! Every configuration file shipped under configs/ must parse and resolve.

use hebb_cli::config::ConfigFile;

#[test]
fn shipped_config_files_resolve() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let file = ConfigFile::parse(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        file.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3, "expected shipped config files in {}", dir.display());
}
