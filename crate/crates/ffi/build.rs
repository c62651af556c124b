use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).expect("readable cbindgen.toml");
    let bindings =
        cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate().expect("header generation");
    let header = crate_dir.join("include").join("ajd.h");
    std::fs::create_dir_all(header.parent().expect("include dir")).expect("create include dir");
    // only touch the file when the contents change, so rebuilds stay quiet
    let mut bytes = Vec::new();
    bindings.write(&mut bytes);
    if std::fs::read(&header).ok().as_deref() != Some(bytes.as_slice()) {
        std::fs::write(&header, bytes).expect("write header");
    }
}
