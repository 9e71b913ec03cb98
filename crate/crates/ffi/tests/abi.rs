use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use synthattr::audio::{self, AudioClip};
use synthattr::features;
use synthattr::pipeline::config::ExperimentConfig;
use synthattr::pipeline::data::load_entry;
use synthattr::pipeline::fixture::{generate_fixture_corpus, FixtureSpec};
use synthattr::pipeline::manifest::{DatasetManifest, Split};
use synthattr::pipeline::split::stratified_split;
use synthattr::pipeline::train::{train_model, Checkpoint};
use synthattr_ffi::*;

fn corpus(dir: &Path) -> DatasetManifest {
    let mut spec = FixtureSpec::new(6, 4, 5);
    spec.durations = vec![(0.2, 0.0); 6];
    let m = generate_fixture_corpus(&spec, dir).unwrap();
    stratified_split(&m, (0.5, 0.25, 0.25), 5).unwrap()
}

fn train(dir: &Path, m: &DatasetManifest, overrides: &[(&str, &str)]) -> PathBuf {
    let mut c = ExperimentConfig::default();
    c.apply_overrides([
        ("epochs", "1"),
        ("batch_size", "4"),
        ("clip_seconds", "0.128"),
        ("branch_channels", "2"),
        ("num_blocks", "2"),
        ("penultimate_width", "8"),
    ])
    .unwrap();
    c.apply_overrides(overrides.iter().copied()).unwrap();
    c.runs_dir = dir.join("runs");
    train_model(&c, m).unwrap().checkpoint
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> Option<String> {
    let p = sa_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn clip_handle(clip: &AudioClip) -> *mut SaClip {
    let mut h = ptr::null_mut();
    let st = unsafe { sa_clip_from_samples(clip.samples.as_ptr(), clip.len(), clip.sample_rate, &mut h) };
    assert_eq!(st, SaStatus::Ok);
    h
}

#[test]
fn network_predictions_and_embeddings_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(&dir.path().join("data"));
    let ckpt = train(dir.path(), &m, &[("run_id", "net")]);
    let lib = Checkpoint::load(&ckpt).unwrap();

    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sa_model_load(cpath(&ckpt).as_ptr(), &mut model) }, SaStatus::Ok);
    assert!(last_error().is_none());
    unsafe {
        assert_eq!(sa_model_num_classes(model), 6);
        assert_eq!(sa_model_clip_seconds(model), 0.128);
        assert_eq!(sa_model_embedding_dim(model), 8);
    }

    for e in m.entries.iter().filter(|e| e.split == Some(Split::Test)) {
        let clip = load_entry(&m, e, None).unwrap();
        let wave = lib.prepare(&clip).unwrap();
        let want_label = lib.predict(std::slice::from_ref(&wave), 1).unwrap()[0];
        let want_emb = lib.embed(&[wave], 1).unwrap().remove(0);

        let h = clip_handle(&clip);
        let mut label = u32::MAX;
        assert_eq!(unsafe { sa_model_predict(model, h, &mut label) }, SaStatus::Ok);
        assert_eq!(label as usize, want_label);

        let mut emb = vec![0.0; 8];
        let mut len = 0;
        assert_eq!(unsafe { sa_model_embed(model, h, emb.as_mut_ptr(), emb.len(), &mut len) }, SaStatus::Ok);
        assert_eq!(len, 8);
        assert_eq!(emb, want_emb);

        let mut small = [0.0; 3];
        let st = unsafe { sa_model_embed(model, h, small.as_mut_ptr(), small.len(), &mut len) };
        assert_eq!(st, SaStatus::BufferTooSmall);
        assert_eq!(len, 8);
        assert!(last_error().unwrap().contains("8"));
        unsafe { sa_clip_free(h) };
    }
    unsafe { sa_model_free(model) };
}

#[test]
fn classical_models_predict_but_do_not_embed() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(&dir.path().join("data"));
    let ckpt = train(dir.path(), &m, &[("run_id", "svm"), ("model", "svm"), ("feature", "mfcc")]);
    let lib = Checkpoint::load(&ckpt).unwrap();

    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sa_model_load(cpath(&ckpt).as_ptr(), &mut model) }, SaStatus::Ok);
    assert_eq!(unsafe { sa_model_embedding_dim(model) }, 0);

    let e = m.entries.iter().find(|e| e.split == Some(Split::Test)).unwrap();
    let clip = load_entry(&m, e, None).unwrap();
    let want = lib.predict(&[lib.prepare(&clip).unwrap()], 1).unwrap()[0];
    let h = clip_handle(&clip);
    let mut label = 0;
    assert_eq!(unsafe { sa_model_predict(model, h, &mut label) }, SaStatus::Ok);
    assert_eq!(label as usize, want);

    let mut len = 0;
    let st = unsafe { sa_model_embed(model, h, ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, SaStatus::InvalidArgument);
    unsafe {
        sa_clip_free(h);
        sa_model_free(model);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { sa_model_load(ptr::null(), &mut model) }, SaStatus::NullPointer);
    assert!(model.is_null());
    assert!(last_error().unwrap().contains("path"));

    let missing = CString::new("/nonexistent/checkpoint.bin").unwrap();
    let st = unsafe { sa_model_load(missing.as_ptr(), &mut model) };
    assert_ne!(st, SaStatus::Ok);
    assert!(model.is_null());
    assert!(last_error().is_some());

    let mut clip = ptr::null_mut();
    let samples = [0.0f32; 4];
    assert_eq!(unsafe { sa_clip_from_samples(samples.as_ptr(), 4, 0, &mut clip) }, SaStatus::InvalidArgument);
    assert_eq!(unsafe { sa_clip_from_samples(samples.as_ptr(), 0, 16000, &mut clip) }, SaStatus::InvalidArgument);
    let nan = [0.0, f32::NAN];
    assert_eq!(unsafe { sa_clip_from_samples(nan.as_ptr(), 2, 16000, &mut clip) }, SaStatus::Numeric);
    assert!(clip.is_null());

    let mut label = 0;
    assert_eq!(unsafe { sa_model_predict(ptr::null(), ptr::null(), &mut label) }, SaStatus::NullPointer);

    assert_eq!(unsafe { sa_clip_from_samples(samples.as_ptr(), 4, 16000, &mut clip) }, SaStatus::Ok);
    assert!(last_error().is_none());
    unsafe {
        assert_eq!(sa_clip_len(clip), 4);
        assert_eq!(sa_clip_sample_rate(clip), 16000);
        assert_eq!(sa_clip_len(ptr::null()), 0);
        assert!(sa_clip_samples(ptr::null()).is_null());
        sa_clip_free(clip);
        sa_clip_free(ptr::null_mut());
        sa_model_free(ptr::null_mut());
    }

    let v = unsafe { CStr::from_ptr(sa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn wav_loading_and_canonicalization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let tone: Vec<f32> = (0..8000).map(|i| 0.5 * (i as f32 * 0.05).sin()).collect();
    audio::write_wav(&AudioClip::new(tone, 8000), &path).unwrap();

    let mut clip = ptr::null_mut();
    assert_eq!(unsafe { sa_clip_load_wav(cpath(&path).as_ptr(), &mut clip) }, SaStatus::Ok);
    let want = audio::load_wav(&path).unwrap();
    unsafe {
        assert_eq!(sa_clip_sample_rate(clip), 8000);
        let got = std::slice::from_raw_parts(sa_clip_samples(clip), sa_clip_len(clip));
        assert_eq!(got, &want.samples[..]);
    }

    let mut canon = ptr::null_mut();
    assert_eq!(unsafe { sa_clip_canonicalize(clip, 0.75, &mut canon) }, SaStatus::Ok);
    unsafe {
        assert_eq!(sa_clip_sample_rate(canon), 16000);
        assert_eq!(sa_clip_len(canon), 12000);
        sa_clip_free(canon);
        sa_clip_free(clip);
    }
}

#[test]
fn mfcc_reports_its_shape_and_matches_the_library() {
    let samples: Vec<f32> = (0..4000).map(|i| ((i * 37 % 101) as f32 / 101.0) - 0.5).collect();
    let lib_clip = AudioClip::new(samples, 16000);
    let want = features::mfcc(&lib_clip, 13, 40, 400, 160).unwrap();
    let clip = clip_handle(&lib_clip);

    let (mut frames, mut coeffs) = (0, 0);
    let st = unsafe { sa_mfcc(clip, 13, 40, 400, 160, ptr::null_mut(), 0, &mut frames, &mut coeffs) };
    assert_eq!(st, SaStatus::BufferTooSmall);
    assert_eq!((frames, coeffs), (want.frames(), want.coeffs()));
    assert_eq!(coeffs, 13);

    let mut out = vec![0.0; frames * coeffs];
    let st = unsafe { sa_mfcc(clip, 13, 40, 400, 160, out.as_mut_ptr(), out.len(), &mut frames, &mut coeffs) };
    assert_eq!(st, SaStatus::Ok);
    assert_eq!(out, want.values());

    let st = unsafe { sa_mfcc(clip, 13, 40, 400, 0, out.as_mut_ptr(), out.len(), &mut frames, &mut coeffs) };
    assert_eq!(st, SaStatus::InvalidArgument);
    unsafe { sa_clip_free(clip) };
}

#[test]
fn generated_header_declares_every_entry_point_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/synthattr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "sa_last_error_message",
        "sa_version",
        "sa_model_load",
        "sa_model_free",
        "sa_model_num_classes",
        "sa_model_embedding_dim",
        "sa_model_clip_seconds",
        "sa_model_predict",
        "sa_model_embed",
        "sa_clip_load_wav",
        "sa_clip_from_samples",
        "sa_clip_canonicalize",
        "sa_clip_free",
        "sa_clip_len",
        "sa_clip_sample_rate",
        "sa_clip_samples",
        "sa_mfcc",
        "SA_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
