use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).expect("cbindgen.toml");
    let bindings = match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(b) => b,
        Err(e) => {
            println!("cargo:warning=header generation failed: {e}");
            return;
        }
    };
    let header = crate_dir.join("include").join("navverify.h");
    std::fs::create_dir_all(header.parent().expect("include dir")).expect("create include dir");
    // Only touch the file when its contents change.
    bindings.write_to_file(&header);
}
