use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdss-se"))
}

struct Run {
    dir: TempDir,
    out: PathBuf,
    config: PathBuf,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("experiment.toml");
        fs::write(&config_path, config).unwrap();
        Run {
            out: dir.path().join("out"),
            config: config_path,
            dir,
        }
    }

    fn exec(&self, command: &str, extra: &[&str]) -> Output {
        self.exec_into(command, &self.out, extra)
    }

    fn exec_into(&self, command: &str, out: &Path, extra: &[&str]) -> Output {
        bin()
            .arg(command)
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(out)
            .args(extra)
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const SMALL_PAPR: &str = r#"
constellation = "qpsk"
[waveform]
nsc = 24
ne = 4
nfft = 160
[window]
family = "kaiser"
kappa = 2.0
[monte_carlo]
trials = 4000
seed = 7
levels = [0.1, 0.01]
"#;

#[test]
fn window_dump_writes_coefficients_and_ripple() {
    let run = Run::new("[waveform]\nnsc = 96\nnfft = 1024\n[window]\nfamily = \"kaiser\"\nkappa = 2.0\n");
    ok(&run.exec("window-dump", &[]));
    let rows = data_rows(&run.read("window.csv"));
    assert_eq!(rows.len(), 96);
    let energy: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap().powi(2)).sum();
    assert!((energy - 96.0).abs() < 1e-9);
    let ripple = run.json("summary.json")["windows"][0]["ripple_db"].as_f64().unwrap();
    assert!((ripple + 7.15).abs() < 0.05);
}

#[test]
fn papr_ccdf_is_reproducible_across_thread_counts() {
    let run = Run::new(SMALL_PAPR);
    let one = run.dir.path().join("one");
    let two = run.dir.path().join("two");
    ok(&run.exec_into("papr-ccdf", &one, &["--threads", "1"]));
    ok(&run.exec_into("papr-ccdf", &two, &["--threads", "2"]));
    for name in ["papr_levels.csv", "papr_ccdf.csv", "summary.json"] {
        let a = fs::read(one.join(name)).unwrap();
        let b = fs::read(two.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn seed_override_changes_results() {
    let run = Run::new(SMALL_PAPR);
    let a = run.dir.path().join("a");
    let b = run.dir.path().join("b");
    ok(&run.exec_into("papr-ccdf", &a, &[]));
    ok(&run.exec_into("papr-ccdf", &b, &["--seed", "8"]));
    assert_ne!(fs::read(a.join("papr_ccdf.csv")).unwrap(), fs::read(b.join("papr_ccdf.csv")).unwrap());
    let meta: Value = serde_json::from_slice(&fs::read(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(meta["run"]["seed"], 8);
}

#[test]
fn zero_trials_rejected_without_output() {
    let run = Run::new(SMALL_PAPR);
    let o = run.exec("papr-ccdf", &["--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!run.out.exists());
}

#[test]
fn malformed_config_is_a_config_error() {
    let run = Run::new("[waveform]\nnsc = 24\nnfft = 96\nbogus = 3\n");
    let o = run.exec("window-dump", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert!(!run.out.exists());
}

#[test]
fn delay_spread_beyond_prefix_is_a_config_error() {
    let run = Run::new(
        "snr_db = [5.0]\n[waveform]\nnsc = 96\nnfft = 1024\nncp = 8\n[channel]\nkind = \"tdlc\"\ndelay_spread_ns = 300\nscs_khz = 15\n",
    );
    let o = run.exec("ber", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cyclic prefix"));
    assert!(!run.out.exists());
}

#[test]
fn shift_sweep_gives_one_row_per_shift() {
    let run = Run::new(&format!("{SMALL_PAPR}[sweep]\naxis = \"l\"\nstart = 0\nstop = 19\nstep = 1\n"));
    ok(&run.exec("papr-ccdf", &["--trials", "500"]));
    let rows = data_rows(&run.read("papr_levels.csv"));
    assert_eq!(rows.len(), 20);
    let shifts: Vec<i64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(shifts, (0..20).collect::<Vec<_>>());
    let header = run.read("papr_levels.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "ne,l,nfft,ripple_db,papr_db_at_1e-1,papr_db_at_1e-2,max_db");
}

#[test]
fn papr_ccdf_accepts_any_fft_size() {
    let run = Run::new("[waveform]\nnsc = 24\nne = 4\nnfft = 100\n[monte_carlo]\ntrials = 500\nlevels = [0.1]\n");
    ok(&run.exec("papr-ccdf", &[]));
    assert_eq!(data_rows(&run.read("papr_levels.csv"))[0][2], "100");
}

const KAISER_BOUNDS: &str = r#"
[waveform]
nsc = 96
nfft = 1024
nfft_policy = "round_up"
[window]
family = "kaiser"
kappa = 2.0
[optimizer]
ne_max = 56
ne_step = 4
"#;

#[test]
fn bound_sweep_has_interior_minimum() {
    let run = Run::new(KAISER_BOUNDS);
    ok(&run.exec("bound-sweep", &[]));
    let rows = data_rows(&run.read("bounds.csv"));
    assert_eq!(rows.len(), 15);
    let u: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    let gu: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(u.iter().zip(&gu).all(|(a, b)| a <= b));
    let best = run.json("summary.json")["minimum"]["ne"].as_u64().unwrap();
    assert!(best > 0 && best < 56, "minimum at {best}");
    // every FFT size was rounded up to a multiple of Ndata
    for r in &rows {
        let ne: usize = r[0].parse().unwrap();
        let nfft: usize = r[2].parse().unwrap();
        assert_eq!(nfft % (96 - ne), 0);
    }
}

#[test]
fn bound_sweep_single_point() {
    let run = Run::new("[waveform]\nnsc = 24\nne = 4\nnfft = 160\n[sweep]\naxis = \"ne\"\nvalues = [4]\n");
    ok(&run.exec("bound-sweep", &[]));
    assert_eq!(data_rows(&run.read("bounds.csv")).len(), 1);
}

#[test]
fn bound_sweep_without_feasible_points_fails() {
    // Nfft = 100 is a multiple of none of Ndata = 23, 22, 21
    let run = Run::new("[waveform]\nnsc = 24\nnfft = 100\n[sweep]\naxis = \"ne\"\nvalues = [1, 2, 3]\n");
    let o = run.exec("bound-sweep", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasible"));
    assert!(!run.out.exists());
}

#[test]
fn rate_sweep_on_awgn_prefers_no_extension_at_high_snr() {
    let run = Run::new(
        "snr_db = [30.0]\n[waveform]\nnsc = 48\nnfft = 512\n[window]\nfamily = \"hann\"\nripple_db = -11\n\
         [sweep]\naxis = \"ne\"\nvalues = [0, 4, 8, 12]\n",
    );
    ok(&run.exec("rate-sweep", &[]));
    assert_eq!(data_rows(&run.read("rate.csv")).len(), 4);
    assert_eq!(run.json("summary.json")["optima"][0]["ne_capa"], 0);
}

#[test]
fn ber_single_snr_single_row() {
    let run = Run::new(
        "snr_db = [6.0]\n[waveform]\nnsc = 24\nne = 4\nnfft = 128\nncp = 16\n[monte_carlo]\ntrials = 2000\nseed = 3\n",
    );
    ok(&run.exec("ber", &[]));
    let rows = data_rows(&run.read("ber.csv"));
    assert_eq!(rows.len(), 1);
    let (bits, sim, theory): (f64, f64, f64) = (rows[0][2].parse().unwrap(), rows[0][4].parse().unwrap(), rows[0][5].parse().unwrap());
    let sigma = (theory * (1.0 - theory) / bits).sqrt();
    assert!((sim - theory).abs() < 4.0 * sigma, "sim {sim} theory {theory}");
}

#[test]
fn se_opt_reports_each_method_and_tradeoff() {
    let run = Run::new(
        r#"
[waveform]
nsc = 48
nfft = 512
ncp = 40
shift = { policy = "optimal", lambda = 0 }
[window]
family = "hann"
ripple_db = -14
[channel]
kind = "tdlc"
delay_spread_ns = 300
scs_khz = 15
[monte_carlo]
trials = 300
seed = 5
[optimizer]
methods = [{ method = "bound_u" }, { method = "capacity", snr_db = 5.0 }]
ne_max = 24
ne_step = 2
tradeoff_snr_db = 5.0
"#,
    );
    ok(&run.exec("se-opt", &[]));
    let summary = run.json("summary.json");
    let optima = summary["optima"].as_array().unwrap();
    assert_eq!(optima.len(), 2);
    assert_eq!(optima[0]["method"]["method"], "bound_u");
    let t = &summary["tradeoff"];
    assert_eq!(t["report"]["ne_papr"], optima[0]["ne_opt"]);
    assert!(t["loss_at_zero"].as_f64().unwrap() > 0.0);
    let rows = data_rows(&run.read("se_curves.csv"));
    assert_eq!(rows.len(), 2 * 13);
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let o = bin().arg("window-dump").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
