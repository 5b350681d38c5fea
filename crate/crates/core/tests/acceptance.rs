//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --release --test acceptance`.

mod common;

use common::{check_tree, fit_cols, peak_scores, random_instance, rms, to_seconds};
use ecgauth::authenticator::{run_trials, ConfusionMatrix};
use ecgauth::config::{AuthConfig, PipelineConfig};
use ecgauth::corpus::{Corpus, CorpusSpec};
use ecgauth::enrollment::{load_db, save_db, EnrollmentDb};
use ecgauth::infotheory::{
    conditional_entropy, entropy, estimate_joint, mutual_information, mutual_information_from_entropies,
    HistogramConfig, JointPmf, Labels, Pmf,
};
use ecgauth::preprocess::{notch, preprocess_pipeline, remove_baseline, remove_pli, PreprocessConfig};
use ecgauth::rng::{derive_seed, seeded};
use ecgauth::signal::{read_record, write_record, EcgRecord};
use ecgauth::slicer::{detect_r_peaks, slice};
use ecgauth::sweep::{default_window_grid, emit_curve, run_sweep, SweepCorpus, SweepPlan, SweepVariable};
use ecgauth::synth::{synth_ecg, SynthSpec};
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_arithmetic() -> Check {
    let t2 = ConfusionMatrix::from_counts(84, 2, 30, 6).metrics().map_err(|e| e.to_string())?;
    let t3 = ConfusionMatrix::from_counts(76, 5, 1, 0).metrics().map_err(|e| e.to_string())?;
    let tol = 1e-12;
    ensure((t2.accuracy - 90.0 / 122.0).abs() < tol, || format!("84/2/30/6 accuracy {}", t2.accuracy))?;
    ensure((t2.recall_unknown - 0.75).abs() < tol, || format!("84/2/30/6 recall {}", t2.recall_unknown))?;
    ensure((t3.accuracy - 76.0 / 82.0).abs() < tol, || format!("76/5/1/0 accuracy {}", t3.accuracy))?;
    ensure(t3.recall_unknown.abs() < tol, || format!("76/5/1/0 recall {}", t3.recall_unknown))?;
    Ok(format!("accuracy {:.6} / {:.6}, recall {} / {}", t2.accuracy, t3.accuracy, t2.recall_unknown, t3.recall_unknown))
}

fn information_suite() -> Check {
    let tol = 1e-9;
    let pmf = |v: Vec<f64>| Pmf::new(v).unwrap();
    let joint = |r: Vec<Vec<f64>>| JointPmf::new(r).unwrap();
    ensure((entropy(&pmf(vec![0.5, 0.5])) - 1.0).abs() < tol, || "fair coin".into())?;
    ensure((entropy(&pmf(vec![0.25; 4])) - 2.0).abs() < tol, || "uniform-4".into())?;
    let indep = joint(vec![vec![0.25, 0.25], vec![0.25, 0.25]]);
    ensure(mutual_information(&indep).abs() < tol, || "independence".into())?;
    ensure((conditional_entropy(&indep) - 1.0).abs() < tol, || "H(x|y) of independent coins".into())?;
    let diag = joint(vec![vec![0.2, 0.0, 0.0], vec![0.0, 0.3, 0.0], vec![0.0, 0.0, 0.5]]);
    let hx = entropy(&pmf(diag.marginal_x()));
    ensure((mutual_information(&diag) - hx).abs() < tol, || "diagonal".into())?;
    let mut rng = seeded(99);
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let mut rows: Vec<Vec<f64>> = (0..a).map(|_| (0..b).map(|_| rng.gen::<f64>()).collect()).collect();
        let s: f64 = rows.iter().flatten().sum();
        rows.iter_mut().flatten().for_each(|v| *v /= s);
        let j = joint(rows);
        let i = mutual_information(&j);
        ensure((i - mutual_information_from_entropies(&j)).abs() < tol, || "double sum vs entropies".into())?;
        ensure((i - mutual_information(&j.transpose())).abs() < tol, || "symmetry".into())?;
    }
    let mut rng = seeded(derive_seed(17, &[0]));
    let xs: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
    let ys: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
    let cfg = HistogramConfig { n_bins: 32, ..HistogramConfig::default() };
    let mi = mutual_information(&estimate_joint(&xs, Labels::Continuous(&ys), &cfg).map_err(|e| e.to_string())?);
    ensure(mi.abs() <= 0.05, || format!("exact identities hold; independent-uniform estimate {mi:.4} bits > 0.05"))?;
    Ok(format!("identities within {tol}; independent estimate {mi:.4} bits"))
}

fn tree_oracle() -> Check {
    for k in 0..200u64 {
        let mut rng = seeded(derive_seed(2024, &[k]));
        let (cols, y, params) = random_instance(&mut rng, k as usize);
        check_tree(&fit_cols(&cols, &y, &params), &cols, &y, &params).map_err(|e| format!("instance {k}: {e}"))?;
    }
    Ok("200 instances match".into())
}

fn filter_suite() -> Check {
    let fs = 500.0;
    let bw = PreprocessConfig::default().pli_bandwidth_hz;
    let tone = |f: f64| -> Vec<f64> { (0..5000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect() };
    let ratio = |f: f64| -> Result<f64, String> {
        let x = tone(f);
        let y = notch(&x, fs, 50.0, bw).map_err(|e| e.to_string())?;
        Ok(rms(&y) / rms(&x))
    };
    let stop = ratio(50.0)?;
    let pass = ratio(5.0)?;
    ensure(stop <= 0.01, || format!("50 Hz residual {stop}"))?;
    ensure((pass - 1.0).abs() <= 0.01, || format!("5 Hz ratio {pass}"))?;
    let rec = EcgRecord::new("tone", fs, tone(50.0), "test").map_err(|e| e.to_string())?;
    let via_record = rms(remove_pli(&rec, 50.0, bw).map_err(|e| e.to_string())?.samples()) / rms(rec.samples());
    ensure(via_record <= 0.01, || format!("record notch residual {via_record}"))?;

    let mut worst: f64 = 0.0;
    let mut rng = seeded(4);
    for p in 0..=5usize {
        for deg in 0..=p {
            let c: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..2500)
                .map(|i| {
                    let t = i as f64 / 250.0;
                    c.iter().rev().fold(0.0, |acc, a| acc * t + a)
                })
                .collect();
            let rec = EcgRecord::new("poly", 250.0, x, "test").map_err(|e| e.to_string())?;
            let out = remove_baseline(&rec, p).map_err(|e| e.to_string())?;
            worst = worst.max(rms(out.samples()) / rms(rec.samples()));
        }
    }
    ensure(worst < 1e-9, || format!("polynomial residual {worst:e}"))?;
    Ok(format!("50 Hz kept {stop:.2e}, 5 Hz ratio {pass:.5}, polynomial residual {worst:.1e}"))
}

fn detection_suite() -> Check {
    let spec = SynthSpec {
        n_subjects: 20,
        duration_s: 30.0,
        morphology_seed: 11,
        session_seed: 11,
        ..SynthSpec::default()
    }
    .clean();
    let (mut worst_p, mut worst_r) = (1.0f64, 1.0f64);
    for s in 0..20 {
        let rec = synth_ecg(&spec, s).map_err(|e| e.to_string())?;
        let pre = preprocess_pipeline(&rec, &PreprocessConfig::default()).map_err(|e| e.to_string())?;
        let peaks = detect_r_peaks(&pre).map_err(|e| e.to_string())?;
        let (p, r) = peak_scores(&to_seconds(&peaks, rec.fs()), rec.r_peaks_s(), rec.duration_s(), 0.010, 0.05);
        worst_p = worst_p.min(p);
        worst_r = worst_r.min(r);
        for w in [0.1, 0.37, 0.6, 1.0] {
            let ss = slice(&pre, &peaks, w, 0.25).map_err(|e| e.to_string())?;
            let want = (w * rec.fs()).round() as usize;
            ensure(ss.row_len == want && ss.data.len() == ss.n_slices() * want, || format!("subject {s}: row length at {w} s"))?;
        }
    }
    ensure(worst_p >= 0.95 && worst_r >= 0.95, || format!("worst precision {worst_p}, recall {worst_r}"))?;
    Ok(format!("worst precision {worst_p:.3}, recall {worst_r:.3}"))
}

fn end_to_end() -> Check {
    let spec = CorpusSpec::default();
    let auth = AuthConfig::default();
    let mut accuracies = Vec::new();
    let (mut rejected, mut trials) = (0usize, 0usize);
    for seed in 0..5u64 {
        let corpus = Corpus::generate(&spec, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let split = corpus.split(spec.n_unknown, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut db = EnrollmentDb::new(PipelineConfig::default(), 0).map_err(|e| e.to_string())?;
        for (id, rec) in &split.enroll {
            db.enroll(id, rec, false).map_err(|e| format!("seed {seed}: {e}"))?;
        }
        let (cm, _) = run_trials(&db, &split.trials, &auth, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        accuracies.push(cm.metrics().map_err(|e| format!("seed {seed}: {e}"))?.accuracy);
        rejected += cm.n_rejected;
        trials += cm.n_trials();
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let frac = rejected as f64 / trials as f64;
    let detail = format!("mean accuracy {mean:.4} over {accuracies:.3?}, rejected {rejected}/{trials}");
    ensure(mean >= 0.90 && frac < 0.20, || detail.clone())?;
    Ok(detail)
}

fn sweep_check() -> Check {
    let plan = SweepPlan {
        variable: SweepVariable::WindowS,
        grid: default_window_grid(),
        pipeline: PipelineConfig::default(),
        auth: AuthConfig::default(),
        corpus: SweepCorpus::Synthetic { spec: CorpusSpec::default(), seed: 0 },
        repeats: 5,
        seed: 0,
    };
    let emit = || -> Result<(Vec<u8>, ecgauth::sweep::SweepCurve), String> {
        let curve = run_sweep(&plan).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        emit_curve(&curve, &mut out).map_err(|e| e.to_string())?;
        Ok((out, curve))
    };
    let (first, curve) = emit()?;
    let (second, _) = emit()?;
    ensure(first == second, || "curve CSV differs between runs".into())?;
    let acc: Vec<f64> = curve.points.iter().map(|p| p.accuracy_mean).collect();
    let rising = acc.windows(2).all(|w| w[0] <= w[1]);
    let falling = acc.windows(2).all(|w| w[0] >= w[1]);
    let argmax = curve.argmax_value().ok_or("no feasible point")?;
    let (lo, hi) = (plan.grid[0], plan.grid[plan.grid.len() - 1]);
    let detail = format!("argmax {argmax} s, accuracies {acc:.3?}");
    ensure(!rising && !falling && argmax > lo && argmax < hi, || detail.clone())?;
    Ok(detail)
}

fn persistence() -> Check {
    let spec = SynthSpec { morphology_seed: 8, session_seed: 9, ..SynthSpec::default() };
    let mut db = EnrollmentDb::new(PipelineConfig::default(), 0).map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    for i in 0..10 {
        let rec = synth_ecg(&spec, i).map_err(|e| e.to_string())?;
        db.enroll(rec.subject_id(), &rec, false).map_err(|e| e.to_string())?;
        records.push(rec);
    }
    let mut bytes = Vec::new();
    save_db(&db, &mut bytes).map_err(|e| e.to_string())?;
    let back = load_db(bytes.as_slice()).map_err(|e| e.to_string())?;
    ensure(back.len() == 10, || format!("{} models after reload", back.len()))?;
    let w = db.config.slicer.window_s;
    for (a, b) in db.models().zip(back.models()) {
        for i in 0..10_000 {
            let x = -0.1 * w + 1.2 * w * i as f64 / 9_999.0;
            let (p, q) = (a.tree.predict_unchecked(&[x]), b.tree.predict_unchecked(&[x]));
            ensure(p.to_bits() == q.to_bits(), || format!("{} differs at {x}", a.entity_id))?;
        }
    }
    for rec in &records {
        let mut first = Vec::new();
        write_record(rec, &mut first).map_err(|e| e.to_string())?;
        let reread = read_record(first.as_slice()).map_err(|e| e.to_string())?;
        let mut second = Vec::new();
        write_record(&reread, &mut second).map_err(|e| e.to_string())?;
        ensure(first == second, || format!("record {} not byte-identical", rec.subject_id()))?;
    }
    Ok("10 trees bit-exact on 10^4 probes, 10 records byte-identical".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("metric arithmetic", metric_arithmetic),
        ("information-theory suite", information_suite),
        ("tree-oracle equivalence", tree_oracle),
        ("filter suite", filter_suite),
        ("slicing and detection", detection_suite),
        ("end-to-end synthetic experiment", end_to_end),
        ("window sweep", sweep_check),
        ("persistence", persistence),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.2} s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.2} s]", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
