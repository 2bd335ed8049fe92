//! Compiles and runs a small C program against the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "fblab.h"

int main(void) {
    FblabChannel *ch = NULL;
    if (fblab_channel_new("1/10", 1, &ch) != FBLAB_STATUS_OK) return 1;
    char *num = NULL, *den = NULL;
    if (fblab_forward_error_exact(ch, 1, &num, &den) != FBLAB_STATUS_OK) return 2;
    if (strcmp(num, "2") != 0 || strcmp(den, "5") != 0) return 3;
    fblab_string_free(num);
    fblab_string_free(den);
    FblabSimStats s;
    if (fblab_simulate(ch, 3, 10, 1, 1, &s) != FBLAB_STATUS_EXACT_CHANNEL_SAMPLING) return 4;
    if (fblab_last_error() == NULL) return 5;
    fblab_channel_free(ch);
    puts("ok");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libfblab_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
