#[cfg(feature = "gen_h")]
extern crate cbindgen;

fn main() {
    println!("cargo:rerun-if-changed=build.rs");
    println!("cargo:rerun-if-changed=src/lib.rs");

    #[cfg(feature = "gen_h")]
    {
        let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
        let bindings = cbindgen::generate(&crate_dir).expect("header generation");
        bindings.write_to_file(format!("{crate_dir}/include/dvfp.h"));
    }
}
