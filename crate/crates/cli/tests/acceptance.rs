//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cmaff::annotations::{convert_obb_to_hbb, RotatedBox};
use cmaff::augment::{mosaic_pair, ImagePair, MosaicConfig};
use cmaff::cmaff::{
    csm_attention, csm_forward, decompose, dem_forward, fuse, param_count, Arrangement,
    CmaffParams, FuseGradCheck, FUSE_GRAD_TOLERANCE,
};
use cmaff::ften::write_feature_map;
use cmaff::metrics::{
    average_precision, evaluate, match_detections, pr_curve, BBox, DetectionBox, EvalConfig,
    GroundTruthBox, MatchLabel,
};
use cmaff::pnm::Image;
use cmaff::tensor::FeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn random_pair(
    rng: &mut ChaCha8Rng,
    max_c: usize,
    max_hw: usize,
) -> (FeatureMap<f32>, FeatureMap<f32>) {
    let c = rng.gen_range(1..=max_c);
    let hw = rng.gen_range(1..=max_hw);
    let mut draw =
        || FeatureMap::from_fn(c, hw, hw, |_, _, _| rng.gen_range(-1.0f32..1.0)).unwrap();
    let fr = draw();
    let ft = draw();
    (fr, ft)
}

fn reconstruction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f32;
    for _ in 0..1000 {
        let (fr, ft) = random_pair(&mut rng, 16, 8);
        let (fc, fd) = decompose(&fr, &ft).map_err(|e| e.to_string())?;
        let r = fc.zip_with(&fd, |a, b| a / 2.0 + b / 2.0).unwrap();
        let t = fc.zip_with(&fd, |a, b| a / 2.0 - b / 2.0).unwrap();
        worst = worst
            .max(r.max_abs_diff(&fr).unwrap())
            .max(t.max_abs_diff(&ft).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 5.0,
        format!("max error {worst:.2e} over 1000 pairs in {secs:.2} s"),
        format!("max error {worst:.2e}, runtime {secs:.2} s"),
    )
}

fn softmax_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f32;
    for _ in 0..1000 {
        let (fr, ft) = random_pair(&mut rng, 16, 8);
        let mut p = CmaffParams::init(fr.channels(), 16, rng.gen(), false).unwrap();
        for layer in p.layers_mut() {
            for b in layer.bias_mut() {
                *b = rng.gen_range(-2.0..2.0);
            }
        }
        let (mr, mt) = csm_attention(&fr, &ft, &p.csm).map_err(|e| e.to_string())?;
        for (a, b) in mr.data().iter().zip(mt.data()) {
            worst = worst.max((a + b - 1.0).abs());
        }
    }
    check(
        worst <= 1e-6,
        format!("max |m_r + m_t - 1| = {worst:.2e} over 1000 draws"),
        format!("max |m_r + m_t - 1| = {worst:.2e}"),
    )
}

fn parallel_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let (fr, ft) = random_pair(&mut rng, 16, 8);
        let p = CmaffParams::init(fr.channels(), 16, rng.gen(), false).unwrap();
        let (er, et) = dem_forward(&fr, &ft, &p.dem).unwrap();
        let (sr, st) = csm_forward(&fr, &ft, &p.csm).unwrap();
        let expected = er.add(&et).unwrap().add(&sr.add(&st).unwrap()).unwrap();
        let out = fuse(&fr, &ft, &p, Arrangement::Parallel).unwrap();
        if out.data() != expected.data() {
            return Err(format!("case {case} differs"));
        }
    }
    Ok("bit-identical on 100 cases".into())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let check_cfg = FuseGradCheck::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for a in Arrangement::ALL {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            worst = worst.max(
                check_cfg
                    .run(a, seed)
                    .map_err(|e| e.to_string())?
                    .max_rel_error,
            );
        }
        ok &= worst <= FUSE_GRAD_TOLERANCE;
        parts.push(format!("{a} {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("{} in {secs:.1} s", parts.join(", "));
    check(ok && secs < 60.0, msg.clone(), msg)
}

fn zero_weight_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f32; 3];
    for _ in 0..50 {
        let (fr, ft) = random_pair(&mut rng, 16, 8);
        let p = CmaffParams::<f32>::zeros(fr.channels(), 16, false).unwrap();
        let s = fr.add(&ft).unwrap();
        let out = fuse(&fr, &ft, &p, Arrangement::Parallel).unwrap();
        let (er, et) = dem_forward(&fr, &ft, &p.dem).unwrap();
        let (sr, st) = csm_forward(&fr, &ft, &p.csm).unwrap();
        let errs = [
            out.max_abs_diff(&s.map(|v| 2.0 * v)).unwrap(),
            er.add(&et)
                .unwrap()
                .max_abs_diff(&s.map(|v| 1.5 * v))
                .unwrap(),
            sr.add(&st)
                .unwrap()
                .max_abs_diff(&s.map(|v| 0.5 * v))
                .unwrap(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let msg = format!(
        "parallel {:.1e}, dem {:.1e}, csm {:.1e}",
        worst[0], worst[1], worst[2]
    );
    check(worst.iter().all(|&e| e <= 1e-6), msg.clone(), msg)
}

fn parameter_audit() -> Outcome {
    for c in [1, 2, 7, 32, 128, 256, 512] {
        for r in [1, 8, 16, 32] {
            for concat in [false, true] {
                let p = CmaffParams::<f32>::zeros(c, r, concat).unwrap();
                let enumerated = p.flatten().len();
                if param_count(c, r, concat) != enumerated || p.num_parameters() != enumerated {
                    return Err(format!(
                        "C={c} r={r} concat={concat}: closed form disagrees"
                    ));
                }
            }
        }
    }
    let total: usize = [128, 256, 512]
        .iter()
        .map(|&c| param_count(c, 16, false))
        .sum();
    Ok(format!(
        "closed form = enumeration on 56 configs; three-block total {total} ({:.3}M) vs reported 0.55M, \
         the reported figure's DEM ratio is unstated so no equality is expected",
        total as f64 / 1e6
    ))
}

fn metrics_oracle() -> Outcome {
    for seed in 0..1000 {
        let (dets, gts) = common::random_instance(seed);
        let m = match_detections(&dets, &gts, 0.5);
        let ap = average_precision(&pr_curve(&m.ranked_labels(), gts.len()));
        let oracle = common::brute_force_class_ap(&dets, &gts, 0.5);
        if ap != oracle {
            return Err(format!("instance {seed}: pipeline {ap} vs oracle {oracle}"));
        }
    }
    use MatchLabel::{FalsePositive as FP, TruePositive as TP};
    let hand = average_precision(&pr_curve(&[TP, FP, TP], 2));
    if (hand - 5.0 / 6.0).abs() > 1e-9 {
        return Err(format!("[TP,FP,TP]/2 gave {hand}"));
    }
    let b = BBox::new(0.5, 0.5, 0.2, 0.3).unwrap();
    let gts = vec![GroundTruthBox {
        bbox: b,
        class_id: 0,
        image_id: "a".into(),
    }];
    let dets = vec![DetectionBox {
        bbox: b,
        class_id: 0,
        image_id: "a".into(),
        score: 0.7,
    }];
    let report = evaluate(&dets, &gts, &EvalConfig::new(1), 1).map_err(|e| e.to_string())?;
    check(
        report.map50() == 1.0 && report.map_sweep_mean() == 1.0,
        "1000 instances exact; [TP,FP,TP]/2 = 5/6; perfect = 1.0/1.0".into(),
        format!(
            "perfect detection gave {} / {}",
            report.map50(),
            report.map_sweep_mean()
        ),
    )
}

fn annotation_conversion() -> Outcome {
    let corners = [
        (100.0, 100.0),
        (200.0, 100.0),
        (200.0, 200.0),
        (100.0, 200.0),
    ];
    let want = [
        150.0 / 1024.0,
        150.0 / 1024.0,
        100.0 / 1024.0,
        100.0 / 1024.0,
    ];
    let mut seen = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let idx = [a, b, c, d];
                    let mut sorted = idx;
                    sorted.sort_unstable();
                    if sorted != [0, 1, 2, 3] {
                        continue;
                    }
                    seen += 1;
                    let r = RotatedBox {
                        xs: idx.map(|i| corners[i].0),
                        ys: idx.map(|i| corners[i].1),
                        class_id: 0,
                        image_size: 1024,
                    };
                    let h = convert_obb_to_hbb(&r).map_err(|e| e.to_string())?;
                    let got = [h.xc, h.yc, h.w, h.h];
                    if got.iter().zip(want).any(|(g, w)| (g - w).abs() > 1e-9) {
                        return Err(format!("order {idx:?} gave {got:?}"));
                    }
                }
            }
        }
    }
    check(
        seen == 24,
        "fixture within 1e-9 for all 24 corner orders".into(),
        format!("{seen} orders"),
    )
}

fn mosaic_alignment() -> Outcome {
    let tiles: Vec<ImagePair> = (0..4)
        .map(|k| {
            let (w, h) = (13 + 4 * k, 11 + 2 * k);
            let mut rgb = Image::new(w, h, 3);
            let mut ir = Image::new(w, h, 1);
            for y in 0..h {
                for x in 0..w {
                    let v = ((x * 37 + y * 11 + k * 71) % 256) as u8;
                    rgb.pixel_mut(x, y).copy_from_slice(&[v, v, v]);
                    ir.pixel_mut(x, y)[0] = v;
                }
            }
            let label = (k, BBox::new(0.5, 0.5, 0.6, 0.4).unwrap());
            ImagePair::new(rgb, ir, vec![label]).unwrap()
        })
        .collect();
    for seed in 0..20 {
        let cfg = MosaicConfig {
            out_size: 64,
            center_jitter: 0.25,
            seed,
        };
        let a = mosaic_pair(&tiles, &cfg).map_err(|e| e.to_string())?;
        let b = mosaic_pair(&tiles, &cfg).map_err(|e| e.to_string())?;
        if a.rgb.encode() != b.rgb.encode()
            || a.ir.encode() != b.ir.encode()
            || a.labels != b.labels
        {
            return Err(format!("seed {seed} not reproducible"));
        }
        let red: Vec<u8> = a.rgb.data().chunks(3).map(|p| p[0]).collect();
        let planes_equal = a.rgb.data().chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]);
        if !planes_equal || red != a.ir.data() {
            return Err(format!("seed {seed}: planes differ"));
        }
    }
    Ok("identical planes stay byte-identical; 20 seeds reproduce exactly".into())
}

fn run_cli(args: &[String]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_cmaff"))
        .args(args)
        .env_remove("CMAFF_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "`cmaff {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(o.stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism_sweep() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let inp = tmp.path().join("in");
    fs::create_dir(&inp).unwrap();
    let p = |name: &str| inp.join(name).display().to_string();

    let fr =
        FeatureMap::from_fn(4, 3, 3, |c, y, x| (c + 2 * y + 3 * x) as f32 / 10.0 - 0.5).unwrap();
    let ft = fr.map(|v| v * v - 0.2);
    write_feature_map(inp.join("rgb.ften"), &fr).unwrap();
    write_feature_map(inp.join("ir.ften"), &ft).unwrap();
    fs::write(
        inp.join("gt.txt"),
        "a 0 0.5 0.5 0.2 0.2\nb 1 0.3 0.3 0.2 0.1\n",
    )
    .unwrap();
    fs::write(
        inp.join("det.txt"),
        "a 0 0.9 0.52 0.5 0.2 0.2\nb 1 0.4 0.7 0.7 0.1 0.1\n",
    )
    .unwrap();
    fs::write(inp.join("vedai.txt"), "100 100 200 100 200 200 100 200 2\n").unwrap();
    for k in 0..4 {
        let mut rgb = Image::new(8, 6, 3);
        let mut ir = Image::new(8, 6, 1);
        for y in 0..6 {
            for x in 0..8 {
                rgb.pixel_mut(x, y).copy_from_slice(&[
                    (x * 30) as u8,
                    (y * 40) as u8,
                    (k * 60) as u8,
                ]);
                ir.pixel_mut(x, y)[0] = (x * y * 5 + k) as u8;
            }
        }
        rgb.write(inp.join(format!("t{k}.ppm"))).unwrap();
        ir.write(inp.join(format!("t{k}.pgm"))).unwrap();
        fs::write(inp.join(format!("t{k}.txt")), "0 0.5 0.5 0.5 0.5\n").unwrap();
    }

    let out = tmp.path().join("out");
    let o = |name: &str| out.join(name).display().to_string();
    let commands: Vec<Vec<String>> = vec![
        vec![
            "fuse".into(),
            p("rgb.ften"),
            p("ir.ften"),
            "--seed".into(),
            "7".into(),
            "--arrangement".into(),
            "csm-dem".into(),
            "--out".into(),
            o("fused.ften"),
            "--viz".into(),
            o("viz"),
            "--save-params".into(),
            o("params"),
        ],
        vec!["gradcheck".into(), "--seeds".into(), "3".into()],
        vec![
            "eval".into(),
            p("gt.txt"),
            p("det.txt"),
            "--classes".into(),
            "2".into(),
            "--threads".into(),
            "2".into(),
        ],
        vec![
            "convert".into(),
            p("vedai.txt"),
            "--out".into(),
            o("labels.txt"),
        ],
        vec![
            "bench".into(),
            "--iters".into(),
            "2".into(),
            "--hw".into(),
            "4".into(),
        ],
        vec![
            "mosaic".into(),
            p("t0"),
            p("t1"),
            p("t2"),
            p("t3"),
            "--seed".into(),
            "4".into(),
            "--size".into(),
            "24".into(),
            "--out".into(),
            o("mosaic"),
        ],
        vec![
            "stats".into(),
            p("t0.txt"),
            p("t1.txt"),
            "--heatmap".into(),
            o("heat.pgm"),
        ],
    ];
    let mut names = Vec::new();
    for args in &commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            if out.exists() {
                fs::remove_dir_all(&out).unwrap();
            }
            fs::create_dir(&out).unwrap();
            let stdout = run_cli(args)?;
            runs.push((stdout, snapshot(&out)));
        }
        if runs[0] != runs[1] {
            return Err(format!("`{}` differs between runs", args[0]));
        }
        names.push(args[0].clone());
    }
    Ok(format!("byte-identical reruns: {}", names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("reconstruction identity", reconstruction),
        ("softmax selection normalization", softmax_normalization),
        ("parallel fusion decomposition", parallel_decomposition),
        ("gradient correctness", gradient_correctness),
        ("zero-weight closed forms", zero_weight_closed_forms),
        ("parameter audit", parameter_audit),
        ("metrics oracle", metrics_oracle),
        ("annotation conversion", annotation_conversion),
        ("mosaic alignment", mosaic_alignment),
        ("CLI determinism sweep", determinism_sweep),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
