// Temporary calibration harness; deleted before release.
use fairprog::classifier::{train_classifier, TrainConfig};
use fairprog::harness::{make_synth_pair, PairSpec};
use fairprog::reprogram::*;
use fairprog::vae::{train_vae, VaeTrainConfig};

#[test]
#[ignore]
fn vae_quality_full_scale() {
    let pair = PairSpec { n_rows: 20000, bias_strength: 0.8, seed: 7 };
    let (source, _) = make_synth_pair(&pair).unwrap();
    let (train, val, _) = source.split((0.7, 0.15, 0.15), 3).unwrap();
    let t0 = std::time::Instant::now();
    let (_, vr) = train_vae(&train, &val, &VaeTrainConfig::default(), 6).unwrap();
    println!("vae default config, {:.1}s", t0.elapsed().as_secs_f64());
    for (c, tv) in &vr.reconstruction_tv { println!("   {c} {tv:.3}"); }
}

#[test]
#[ignore]
fn gan_with_dataspace_anchor() {
    let pair = PairSpec { n_rows: 12000, bias_strength: 0.8, seed: 7 };
    let (source, _) = make_synth_pair(&pair).unwrap();
    let (train, val, _) = source.split((0.7, 0.15, 0.15), 3).unwrap();
    let c = train_classifier(&train, &val, &TrainConfig::default(), 5).unwrap();
    let (vae, _) = train_vae(&train, &val, &VaeTrainConfig::default(), 6).unwrap();
    println!("baseline acc {:.3}", c.val_accuracy());
    let g0 = build_generator(&vae, source.schema(), source.schema(), 9).unwrap();

    for l2 in [2.0_f64, 8.0] {
        let config = ReprogramConfig {
            mode: ReprogramMode::Gan, gamma: 0.5, epochs: 60, eval_every: 5, seed: 11,
            l2_mode: L2Mode::DataSpace, l2_coeff: l2,
            ..ReprogramConfig::default()
        };
        let t0 = std::time::Instant::now();
        let t = train_reprogram(g0.clone(), &c, &train, &val, &config, "sdst", c.val_accuracy()).unwrap();
        let worst = t.report.column_tv.iter().map(|x| x.tv).fold(0.0_f64, f64::max);
        println!("l2={l2}: acc {:.3} realism {} worst_tv {:.3} epoch {} probe {:.3} ({:.0}s)",
            t.report.accuracy, t.report.realism_pass, worst, t.report.selected_epoch,
            t.report.fairness_probe_accuracy, t0.elapsed().as_secs_f64());
    }
}

#[test]
#[ignore]
fn fairgan_ddst_grid() {
    let pair = PairSpec { n_rows: 12000, bias_strength: 0.8, seed: 7 };
    let (source, target) = make_synth_pair(&pair).unwrap();
    let (strain, sval, _) = source.split((0.7, 0.15, 0.15), 3).unwrap();
    let (ttrain, tval, _) = target.split((0.7, 0.15, 0.15), 4).unwrap();
    let c = train_classifier(&strain, &sval, &TrainConfig::default(), 5).unwrap();
    let (vae, _) = train_vae(&strain, &sval, &VaeTrainConfig::default(), 6).unwrap();
    let baseline = train_classifier(&ttrain, &tval, &TrainConfig::default(), 7).unwrap();
    println!("base acc {:.3}, target direct baseline {:.3}", c.val_accuracy(), baseline.val_accuracy());
    let g0 = build_generator(&vae, source.schema(), target.schema(), 9).unwrap();

    for (l2, delta) in [(4.0_f64, 2.0_f64), (4.0, 6.0), (8.0, 6.0), (2.0, 4.0)] {
        let config = ReprogramConfig {
            mode: ReprogramMode::FairGan, gamma: 0.5, delta, epochs: 60, eval_every: 5, seed: 11,
            l2_mode: L2Mode::DataSpace, l2_coeff: l2,
            ..ReprogramConfig::default()
        };
        let t0 = std::time::Instant::now();
        let t = train_reprogram(g0.clone(), &c, &ttrain, &tval, &config, "ddst", baseline.val_accuracy()).unwrap();
        let worst = t.report.column_tv.iter().map(|x| x.tv).fold(0.0_f64, f64::max);
        println!("l2={l2} delta={delta}: acc {:.3} realism {} worst_tv {:.3} epoch {} probe {:.3} ({:.0}s)",
            t.report.accuracy, t.report.realism_pass, worst, t.report.selected_epoch,
            t.report.fairness_probe_accuracy, t0.elapsed().as_secs_f64());
    }
}

#[test]
#[ignore]
fn shipped_schemas_parse() {
    for name in ["compas", "candidate"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("schemas/{name}.json"));
        let schema = fairprog::tabular::Schema::from_json_file(&path).unwrap();
        println!("{name}: {} columns, label {}, protected {}", schema.columns.len(), schema.label_column, schema.protected_column);
    }
}
