use std::env;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("SPINCHANNEL_FFI_H".to_string()),
        header: Some(
            "/* C interface of the spinchannel correlated-channel simulator.\n * Times are the dimensionless J*t; basis strings are bit patterns with\n * qubit j at bit j-1 (set bit = excited). */"
                .to_string(),
        ),
        cpp_compat: true,
        documentation: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/spinchannel.h"));
        }
        Err(err) => {
            // header generation must not break plain cargo builds
            println!("cargo:warning=cbindgen failed: {err}");
        }
    }
}
