use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use spose_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = spose_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Writes a 4-concept vocabulary, a small embedding and a few judgments.
fn fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let vocab = dir.join("vocab.txt");
    std::fs::write(&vocab, "cat\ndog\ncar\nbus\n").unwrap();
    let emb = dir.join("emb.tsv");
    std::fs::write(
        &emb,
        "# spose-embedding m=4 p=2\ncat\t2.0\t0.0\ndog\t1.5\t0.1\ncar\t0.0\t2.0\nbus\t0.1\t1.5\n",
    )
    .unwrap();
    let triplets = dir.join("triplets.tsv");
    // (cat, dog, car): cat-dog; (car, bus, dog): car-bus; (cat, dog, bus): dog-bus, a miss
    std::fs::write(&triplets, "0\t1\t2\t0\n2\t3\t1\t0\n0\t1\t3\t2\n").unwrap();
    (vocab, emb, triplets)
}

#[test]
fn load_query_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab_path, emb_path, trip_path) = fixture(dir.path());
    unsafe {
        let mut vocab = ptr::null_mut();
        assert_eq!(
            spose_vocabulary_load(cstr(&vocab_path).as_ptr(), &mut vocab),
            SposeStatus::Ok
        );
        assert_eq!(spose_vocabulary_len(vocab), 4);

        let mut data = ptr::null_mut();
        assert_eq!(
            spose_dataset_load(cstr(&trip_path).as_ptr(), vocab, &mut data),
            SposeStatus::Ok
        );
        assert_eq!(spose_dataset_len(data), 3);

        let mut emb = ptr::null_mut();
        assert_eq!(
            spose_embedding_load(cstr(&emb_path).as_ptr(), &mut emb),
            SposeStatus::Ok
        );
        assert_eq!(
            (spose_embedding_rows(emb), spose_embedding_cols(emb)),
            (4, 2)
        );

        let mut v = 0.0;
        assert_eq!(spose_embedding_get(emb, 1, 0, &mut v), SposeStatus::Ok);
        assert_eq!(v, 1.5);
        assert_eq!(
            spose_embedding_get(emb, 4, 0, &mut v),
            SposeStatus::InvalidArgument
        );

        let mut buf = [0.0; 8];
        assert_eq!(
            spose_embedding_copy_values(emb, buf.as_mut_ptr(), 8),
            SposeStatus::Ok
        );
        assert_eq!(buf, [2.0, 0.0, 1.5, 0.1, 0.0, 2.0, 0.1, 1.5]);
        assert_eq!(
            spose_embedding_copy_values(emb, buf.as_mut_ptr(), 7),
            SposeStatus::InvalidArgument
        );

        let mut acc = 0.0;
        assert_eq!(spose_accuracy(emb, data, &mut acc), SposeStatus::Ok);
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);

        let mut ll = 0.0;
        assert_eq!(spose_log_likelihood(emb, data, &mut ll), SposeStatus::Ok);
        assert!(ll < 0.0 && ll.is_finite());

        let (mut a, mut b) = (9, 9);
        assert_eq!(
            spose_predict_choice(emb, 3, 0, 2, &mut a, &mut b),
            SposeStatus::Ok
        );
        assert_eq!((a, b), (2, 3));

        let out = dir.path().join("copy.tsv");
        assert_eq!(
            spose_embedding_save(emb, cstr(&out).as_ptr()),
            SposeStatus::Ok
        );
        let mut emb2 = ptr::null_mut();
        assert_eq!(
            spose_embedding_load(cstr(&out).as_ptr(), &mut emb2),
            SposeStatus::Ok
        );
        let mut buf2 = [0.0; 8];
        spose_embedding_copy_values(emb2, buf2.as_mut_ptr(), 8);
        assert_eq!(buf, buf2);

        spose_embedding_free(emb2);
        spose_embedding_free(emb);
        spose_dataset_free(data);
        spose_vocabulary_free(vocab);
        spose_embedding_free(ptr::null_mut());
    }
}

#[test]
fn probabilities_normalize() {
    let mut p = [0.0; 3];
    unsafe {
        assert_eq!(
            spose_triplet_probabilities(800.0, -800.0, 0.0, p.as_mut_ptr()),
            SposeStatus::Ok
        );
    }
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(p[0], 1.0);
    unsafe {
        assert_eq!(
            spose_triplet_probabilities(f64::NAN, 0.0, 0.0, p.as_mut_ptr()),
            SposeStatus::Numerical
        );
    }
    assert!(!last_error().is_empty());
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut emb = ptr::null_mut();
        let missing = cstr(&dir.path().join("missing.tsv"));
        assert_eq!(
            spose_embedding_load(missing.as_ptr(), &mut emb),
            SposeStatus::Io
        );
        assert!(last_error().contains("missing.tsv"));
        assert!(emb.is_null());

        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "# spose-embedding m=1 p=1\nx\t-1.0\n").unwrap();
        assert_eq!(
            spose_embedding_load(cstr(&bad).as_ptr(), &mut emb),
            SposeStatus::Input
        );

        assert_eq!(
            spose_embedding_load(ptr::null(), &mut emb),
            SposeStatus::InvalidArgument
        );
        assert_eq!(
            spose_embedding_load(missing.as_ptr(), ptr::null_mut()),
            SposeStatus::InvalidArgument
        );
        assert!(last_error().contains("out"));

        let neg = [1.0, -0.5];
        assert_eq!(
            spose_embedding_from_values(neg.as_ptr(), 1, 2, ptr::null(), &mut emb),
            SposeStatus::Input
        );
    }
}

#[test]
fn train_through_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab_path, _, trip_path) = fixture(dir.path());
    let mut lines = String::new();
    for _ in 0..50 {
        lines.push_str("0\t1\t2\t0\n2\t3\t0\t0\n0\t1\t3\t0\n1\t2\t3\t2\n");
    }
    std::fs::write(&trip_path, lines).unwrap();
    unsafe {
        let mut vocab = ptr::null_mut();
        spose_vocabulary_load(cstr(&vocab_path).as_ptr(), &mut vocab);
        let mut data = ptr::null_mut();
        assert_eq!(
            spose_dataset_load(cstr(&trip_path).as_ptr(), vocab, &mut data),
            SposeStatus::Ok
        );

        let grid = [0.01, 0.1];
        let mut config = spose_train_config_default();
        assert!(!config.lambda_grid.is_null() && config.n_lambda == 16);
        config.lambda_grid = grid.as_ptr();
        config.n_lambda = grid.len();
        config.epochs = 30;
        config.init_dims = 4;
        config.learning_rate = 0.05;
        config.seed = 11;

        let run = |config: &SposeTrainConfig| {
            let mut emb = ptr::null_mut();
            let mut lambda = 0.0;
            assert_eq!(
                spose_train(data, config, &mut emb, &mut lambda),
                SposeStatus::Ok,
                "{}",
                last_error()
            );
            let n = spose_embedding_rows(emb) * spose_embedding_cols(emb);
            let mut buf = vec![0.0; n];
            spose_embedding_copy_values(emb, buf.as_mut_ptr(), n);
            spose_embedding_free(emb);
            (lambda, buf)
        };
        let first = run(&config);
        assert!(grid.contains(&first.0));
        assert!(!first.1.is_empty() && first.1.iter().all(|v| *v >= 0.0));
        assert_eq!(first, run(&config));

        config.epochs = 0;
        config.learning_rate = -1.0;
        let mut emb = ptr::null_mut();
        assert_eq!(
            spose_train(data, &config, &mut emb, ptr::null_mut()),
            SposeStatus::Input
        );

        spose_dataset_free(data);
        spose_vocabulary_free(vocab);
    }
}

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("spose.h")
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for sym in [
        "spose_last_error_message",
        "spose_version",
        "spose_vocabulary_load",
        "spose_vocabulary_free",
        "spose_dataset_load",
        "spose_dataset_free",
        "spose_embedding_load",
        "spose_embedding_from_values",
        "spose_embedding_save",
        "spose_embedding_copy_values",
        "spose_embedding_free",
        "spose_triplet_probabilities",
        "spose_log_likelihood",
        "spose_accuracy",
        "spose_predict_choice",
        "spose_train_config_default",
        "spose_train",
        "typedef struct SposeEmbedding SposeEmbedding",
        "SPOSE_STATUS_NUMERICAL = 3",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

/// Compiles and runs a C program against the header and the shared library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libspose_ffi.so");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "spose.h"
int main(void) {
    double p[3];
    if (spose_triplet_probabilities(1.0, 0.0, 0.0, p) != SPOSE_STATUS_OK) return 1;
    double v[4] = {1.0, 0.0, 0.0, 1.0};
    SposeEmbedding *e = NULL;
    if (spose_embedding_from_values(v, 2, 2, NULL, &e) != SPOSE_STATUS_OK) return 2;
    size_t r = spose_embedding_rows(e);
    spose_embedding_free(e);
    if (spose_embedding_load(NULL, &e) != SPOSE_STATUS_INVALID_ARGUMENT) return 3;
    printf("%.6f %zu %s\n", p[0] + p[1] + p[2], r, spose_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg("-L")
        .arg(&target_dir)
        .arg("-lspose_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe)
        .env("LD_LIBRARY_PATH", &target_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("1.000000 2 "), "{text}");
}
