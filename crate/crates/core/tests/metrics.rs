use std::path::{Path, PathBuf};

use ar_core::codec::{degrade, load_image, save_image};
use ar_core::metrics::{evaluate_dataset, psnr, psnr_b, ssim_eval, EvalOptions};

fn heldout() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/heldout")
}

fn first_five(dir: &Path) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for p in ar_core::codec::list_images(dir).unwrap().into_iter().take(5) {
        std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
    }
    tmp
}

#[test]
fn jpeg_quality_ordering() {
    let img = load_image(heldout().join("chelsea_0.png")).unwrap();
    let r = img.luma8().unwrap();
    let q10 = degrade(&img, 10).unwrap().luma8().unwrap();
    let q40 = degrade(&img, 40).unwrap().luma8().unwrap();
    assert!(psnr_b(&r, &q10, 8).unwrap() < psnr(&r, &q10).unwrap());
    assert!(ssim_eval(&r, &q10).unwrap() < ssim_eval(&r, &q40).unwrap());
}

#[test]
fn identical_directories() {
    let opts = EvalOptions {
        qfs: vec![],
        test_dir: Some(heldout()),
        restorer: None,
    };
    let report = evaluate_dataset(heldout(), &opts).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.missing.is_empty());
    let avg = &report.averages()[0];
    assert_eq!(avg.psnr, f64::INFINITY);
    assert!((avg.ssim - 1.0).abs() < 1e-12);
}

#[test]
fn simulated_qf20_over_five_images() {
    let set = first_five(&heldout());
    let opts = EvalOptions {
        qfs: vec![20],
        test_dir: None,
        restorer: None,
    };
    let report = evaluate_dataset(set.path(), &opts).unwrap();
    assert_eq!(report.rows.len(), 5);
    let names: Vec<_> = report.rows.iter().map(|r| r.image.clone()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for r in &report.rows {
        assert!(r.psnr_b <= r.psnr, "{r:?}");
    }
    let avg = &report.averages()[0];
    assert!(avg.psnr.is_finite() && avg.psnr_b.is_finite() && avg.ssim.is_finite());
}

#[test]
fn missing_pairs_are_reported_and_skipped() {
    let reference = first_five(&heldout());
    let test = tempfile::tempdir().unwrap();
    let qdir = test.path().join("qf10");
    std::fs::create_dir(&qdir).unwrap();
    std::fs::create_dir(test.path().join("qf30")).unwrap();
    let names = ar_core::codec::list_images(reference.path()).unwrap();
    for p in &names[..3] {
        let img = degrade(&load_image(p).unwrap(), 10).unwrap();
        save_image(&img, qdir.join(p.file_name().unwrap())).unwrap();
    }
    let identity = |x: &ar_core::codec::ImagePlanes| Ok(x.clone());
    let opts = EvalOptions {
        qfs: vec![10, 30],
        test_dir: Some(test.path().to_path_buf()),
        restorer: Some(("identity", &identity)),
    };
    let report = evaluate_dataset(reference.path(), &opts).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.missing.len(), 2 + 5);
    let avg = report.averages();
    assert_eq!(avg.len(), 2);
    assert_eq!(avg[0].psnr, avg[1].psnr);
    assert!(report.to_markdown().contains("| 10 | identity |"));
}
