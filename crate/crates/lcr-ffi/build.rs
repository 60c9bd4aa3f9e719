use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("lcr.h");
    // Header generation failures downgrade to a warning when a previously
    // generated header is already present, so offline rebuilds keep working.
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            std::fs::create_dir_all(header.parent().unwrap()).unwrap();
            bindings.write_to_file(&header);
        }
        Err(e) => {
            if header.exists() {
                println!("cargo:warning=keeping existing lcr.h (cbindgen failed: {e})");
            } else {
                panic!("cannot generate lcr.h: {e}");
            }
        }
    }
}
