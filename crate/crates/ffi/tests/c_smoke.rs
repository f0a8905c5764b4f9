//! Compiles a small C program against the generated header and the static
//! library, then runs it on the shipped fixtures.

use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

fn staticlib() -> Option<PathBuf> {
    let exe = env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.to_path_buf(), deps.parent()?.to_path_buf()]
        .into_iter()
        .map(|d| d.join("libmesa_ffi.a"))
        .find(|p| p.exists())
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let Some(lib) = staticlib() else {
        eprintln!("skipping: libmesa_ffi.a not found next to the test binary");
        return;
    };
    let cc = env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("mesa_smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status();
    let status = match status {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({cc}): {e}");
            return;
        }
    };
    assert!(status.success(), "C compile failed");

    let fixtures = manifest.join("../../fixtures");
    let run = Command::new(&out)
        .arg(fixtures.join("cards.json"))
        .arg(fixtures.join("script.json"))
        .arg(fixtures.join("suite.json"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("NoProbe,B,40,50,0.800"), "{stdout}");
    assert!(stdout.contains("full overall 1.000"));
}
