use std::path::Path;
use std::process::{Command, Output};

use reflex::io::save_image;
use reflex::reflex_core::Tensor;

const FAST: [&str; 10] = [
    "--set", "T=8", "--set", "t_prime=4", "--set", "n_noising=2", "--set", "attn_layers=5-10",
    "--set", "res_layers=3-4",
];

fn reflex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reflex"))
        .args(["--backend", "toy"])
        .args(args)
        .output()
        .unwrap()
}

fn image(dir: &Path) -> String {
    let img = Tensor::new(
        vec![16, 16, 3],
        (0..768).map(|i| ((i * 17) % 89) as f32 / 88.0).collect(),
    )
    .unwrap();
    let p = dir.join("in.png");
    save_image(&p, &img).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn edit_with_dump_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path());
    let out = dir.path().join("edit");
    let mut args = vec![
        "edit", "--image", &img, "--source-prompt", "a cat on a mat", "--target-prompt",
        "a dog on a mat", "--blended-word", "cat", "--out", out.to_str().unwrap(), "--dump",
    ];
    args.extend(FAST);
    let o = reflex(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["edited.png", "mask.png", "report.txt", "edited_latent.rtn", "trajectory/index.txt", "features/manifest.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("mask_source = word:cat"));
    let edited = image::open(out.join("edited.png")).unwrap();
    assert_eq!((edited.width(), edited.height()), (64, 64));
}

#[test]
fn invert_reports_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path());
    let out = dir.path().join("inv");
    let mut args = vec!["invert", "--image", &img, "--out", out.to_str().unwrap(), "--reconstruct-from", "4"];
    args.extend(FAST);
    let o = reflex(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reconstruction mse from step 4"));
    let index = std::fs::read_to_string(out.join("index.txt")).unwrap();
    assert_eq!(index.lines().filter(|l| !l.starts_with('#')).count(), 9);
}

#[test]
fn bad_override_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path());
    let o = reflex(&["edit", "--image", &img, "--target-prompt", "x", "--out", "/nonexistent", "--set", "bogus=1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}
