#![allow(dead_code)]

use std::path::{Path, PathBuf};

/// Tiny but complete configuration: 20 months of 48 hours, a two-layer
/// 8/4 stack and a 6/3 DBN.
pub fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 11
runs = 1
{extra}
[paths]
data_dir = "data"
output_dir = "out"

[synth]
months = 20

[plan]
hours_per_month = 48

[ae]
batch_size = 32
learning_rate = 0.01

[[ae.layers]]
width = 8
epochs = 4
l2 = 3e-5
sparsity_weight = 4.0
sparsity_target = 0.15

[[ae.layers]]
width = 4
epochs = 4
l2 = 1e-5
sparsity_weight = 4.0
sparsity_target = 0.1

[ae.finetune]
epochs = 8
batch_size = 32
learning_rate = 0.1

[dbn]
widths = [6, 3]
epochs = 2

[dbn.finetune]
epochs = 4
batch_size = 10
learning_rate = 0.2
"#
    );
    let path = dir.join("atl.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn atl(args: &[&str]) -> i32 {
    let mut v = vec!["atl"];
    v.extend_from_slice(args);
    atl_cli::run(v)
}
