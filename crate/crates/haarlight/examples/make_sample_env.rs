//! Regenerates the sample environment map shipped in `scenes/studio.pfm`:
//! a sky gradient with a warm sun disc, normalized to peak 1, 64x64.
//!
//! ```text
//! cargo run --example make_sample_env -- scenes/studio.pfm
//! ```

use haarlight::cli::write_map_pfm;
use haarlight::fixtures::synthetic_environment;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scenes/studio.pfm".to_string());
    let env = synthetic_environment(6, 0, 1);
    write_map_pfm(std::path::Path::new(&path), &env).expect("write sample env");
    println!("wrote {path}");
}
