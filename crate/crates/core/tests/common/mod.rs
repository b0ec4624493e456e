#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use logpolar_core::experiments::load_mnist;
use logpolar_core::Dataset;

/// `$MNIST_DATA_DIR`, else `data/mnist` at the workspace root.
pub fn data_dir() -> PathBuf {
    std::env::var_os("MNIST_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

/// Both canonical splits, loaded once per test binary. `None` (with a note
/// on stderr) when the files have not been fetched.
pub fn mnist() -> Option<&'static (Dataset, Dataset)> {
    static DATA: OnceLock<Option<(Dataset, Dataset)>> = OnceLock::new();
    DATA.get_or_init(|| match load_mnist(&data_dir()) {
        Ok(d) => Some(d),
        Err(e) => {
            eprintln!(
                "skipping: MNIST not available in {} ({e}); run `logpolar fetch`",
                data_dir().display()
            );
            None
        }
    })
    .as_ref()
}
