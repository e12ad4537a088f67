use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fusecc::corpus::{build_vocabulary, tokenize_code};
use fusecc::fusion::{FusionMode, HybridModel};
use fusecc::layers::BackboneConfig;
use fusecc::training::{save_checkpoint, TrainConfig};
use fusecc_ffi::{
    fusecc_engine_complete, fusecc_engine_free, fusecc_engine_open, fusecc_engine_vocab_size,
    fusecc_last_error, fusecc_string_free, FuseccEngine, FuseccStatus,
};

fn write_fixture_checkpoint(path: &std::path::Path) -> usize {
    let snippets = ["x = f ( a , b )", "y = g ( c , d )", "z = f ( a , d )"];
    let tokenized: Vec<Vec<String>> = snippets
        .iter()
        .map(|s| tokenize_code(s).unwrap())
        .collect();
    let vocab = build_vocabulary(&tokenized, 64, 1).unwrap();
    let cfg = BackboneConfig {
        layers: 1,
        d_model: 8,
        heads: 2,
        d_ff: 16,
        max_seq_len: 32,
        vocab_size: vocab.size(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let model = HybridModel::new(cfg.clone(), cfg, FusionMode::Static, &mut rng).unwrap();
    save_checkpoint(&model, &vocab, &TrainConfig::default(), 4, path).unwrap();
    vocab.size()
}

#[test]
fn open_complete_free_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("engine.hcc1");
    let vocab_size = write_fixture_checkpoint(&checkpoint);

    let c_path = CString::new(checkpoint.to_str().unwrap()).unwrap();
    let mut engine: *mut FuseccEngine = ptr::null_mut();
    let status = unsafe { fusecc_engine_open(c_path.as_ptr(), &mut engine) };
    assert_eq!(status, FuseccStatus::Ok);
    assert!(!engine.is_null());
    assert_eq!(unsafe { fusecc_engine_vocab_size(engine) }, vocab_size);

    let prompt = CString::new("x = f ( a , b )").unwrap();
    let mut text: *mut c_char = ptr::null_mut();
    let status = unsafe { fusecc_engine_complete(engine, prompt.as_ptr(), 4, &mut text) };
    assert_eq!(status, FuseccStatus::Ok);
    assert!(!text.is_null());
    let completion = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
    assert!(!completion.is_empty());

    // Greedy decoding is deterministic, so a second call matches.
    let mut text2: *mut c_char = ptr::null_mut();
    let status = unsafe { fusecc_engine_complete(engine, prompt.as_ptr(), 4, &mut text2) };
    assert_eq!(status, FuseccStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(text2) }.to_str().unwrap(), completion);

    unsafe {
        fusecc_string_free(text);
        fusecc_string_free(text2);
        fusecc_engine_free(engine);
    }
}

#[test]
fn open_missing_checkpoint_reports_error() {
    let c_path = CString::new("/no/such/checkpoint.hcc1").unwrap();
    let mut engine: *mut FuseccEngine = ptr::null_mut();
    let status = unsafe { fusecc_engine_open(c_path.as_ptr(), &mut engine) };
    assert_eq!(status, FuseccStatus::BadCheckpoint);
    assert!(engine.is_null());
    let message = unsafe { CStr::from_ptr(fusecc_last_error()) }.to_str().unwrap();
    assert!(!message.is_empty());
}

#[test]
fn invalid_utf8_prompt_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("engine.hcc1");
    write_fixture_checkpoint(&checkpoint);
    let c_path = CString::new(checkpoint.to_str().unwrap()).unwrap();
    let mut engine: *mut FuseccEngine = ptr::null_mut();
    assert_eq!(
        unsafe { fusecc_engine_open(c_path.as_ptr(), &mut engine) },
        FuseccStatus::Ok
    );

    let bad = CString::new(vec![0xFFu8, 0xFE]).unwrap();
    let mut text: *mut c_char = ptr::null_mut();
    let status = unsafe { fusecc_engine_complete(engine, bad.as_ptr(), 4, &mut text) };
    assert_eq!(status, FuseccStatus::InvalidUtf8);
    assert!(text.is_null());

    unsafe { fusecc_engine_free(engine) };
}
