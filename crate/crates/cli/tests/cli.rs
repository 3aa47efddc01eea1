use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn algrand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_algrand"))
        .args(args)
        .output()
        .expect("spawn algrand")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const CONFIG: &str = r#"
n_strings = 3
string_len = 8192
tests = ["borel", "csss2", "csss4"]
carmichael_bound = 20000
run_complemented = true

[csss4]
offset_stride = 256

[[sources]]
label = "mt"
family = "mt19937"
seed = 11

[[sources]]
label = "philox"
family = "philox4x32"
seed = 12
"#;

#[test]
fn carmichael_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = algrand(&["carmichael", "--bound", "10000", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "n\n561\n1105\n1729\n2465\n2821\n6601\n8911\n"
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("7 Carmichael numbers"));

    let json = dir.path().join("c.json");
    let o = algrand(&["carmichael", "--bound", "2000", "--out", json.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["members"], serde_json::json!([561, 1105, 1729]));
}

#[test]
fn carmichael_budget_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = algrand(&[
        "carmichael",
        "--bound",
        "1000000000000",
        "--memory-mib",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_subcommand_writes_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pi.txt");
    let o = algrand(&["gen", "--spec", "pi", "--bits", "16", "--out", out.to_str().unwrap(), "--bit-format", "ascii01"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().trim(), "0010010000111111");

    let bin = dir.path().join("b.bin");
    let o = algrand(&["gen", "--spec", "bernoulli:seed=3,bias=1", "--bits", "12", "--out", bin.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(&bin).unwrap(), vec![0xff, 0xf0]);

    let o = algrand(&["gen", "--spec", "nonsense:seed=1", "--bits", "8", "--out", bin.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = algrand(&["run", &cfg, "--output-dir", out.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    // 2 sources x 3 strings x 3 tests x 2 (original + complement)
    assert_eq!(csv.lines().count(), 1 + 36);
    for test in ["borel", "csss2", "csss4"] {
        for tag in ["orig", "comp"] {
            assert!(out.join(format!("statreport-{test}-{tag}.json")).exists());
        }
    }
    assert!(out.join("boxplot.json").exists());
    assert!(out.join("manifest.json").exists());

    let again = dir.path().join("again");
    let o = algrand(&["run", &cfg, "--output-dir", again.to_str().unwrap(), "--workers", "1"]);
    assert!(o.status.success());
    assert_eq!(csv, fs::read_to_string(again.join("metrics.csv")).unwrap());

    let st = dir.path().join("st");
    let o = algrand(&["stats", "--metrics", out.join("metrics.csv").to_str().unwrap(), "--output-dir", st.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Kolmogorov-Smirnov"));
    assert_eq!(
        fs::read(st.join("statreport-borel-orig.json")).unwrap(),
        fs::read(out.join("statreport-borel-orig.json")).unwrap()
    );
    let o = algrand(&["stats", "--metrics", out.join("metrics.json").to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &CONFIG.replace("string_len = 8192", "string_len = 10"));
    assert_eq!(algrand(&["run", &bad]).status.code(), Some(1));
    assert_eq!(algrand(&["run", "/nonexistent/config.toml"]).status.code(), Some(1));
    assert_eq!(algrand(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(algrand(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_bitfile_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "n_strings = 1\nstring_len = 2048\ntests = [\"borel\"]\noutput_dir = \"{}\"\n\n[[sources]]\nlabel = \"q\"\nfamily = \"file\"\npath = \"missing.bin\"\nformat = \"packed-msb\"\n\n[[sources]]\nlabel = \"p\"\nfamily = \"pi\"\n",
        dir.path().join("o").display()
    );
    let cfg = write_config(dir.path(), &body);
    assert_eq!(algrand(&["run", &cfg]).status.code(), Some(2));
}
