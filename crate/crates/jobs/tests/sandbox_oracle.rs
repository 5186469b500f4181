//! Archive fidelity checked against the system `tar` and `gzip` tools.

use std::collections::BTreeMap;
use std::process::Command;

use lgrid_jobs::sandbox::{pack, read_tree, unpack, write_entries, SandboxEntry};
use proptest::prelude::*;

fn tool_available(name: &str) -> bool {
    Command::new(name)
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn entries_strategy() -> impl Strategy<Value = Vec<SandboxEntry>> {
    let path = prop::collection::vec("[a-z0-9_]{1,8}", 1..4).prop_map(|parts| parts.join("/"));
    prop::collection::btree_map(path, prop::collection::vec(any::<u8>(), 0..2048), 0..12).prop_map(
        |files| {
            // A path cannot be both a file and a directory.
            let names: Vec<String> = files.keys().cloned().collect();
            files
                .into_iter()
                .filter(|(p, _)| {
                    !names
                        .iter()
                        .any(|other| other.starts_with(&format!("{p}/")))
                })
                .map(|(p, d)| SandboxEntry::new(p, d))
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_then_unpack_is_identity(entries in entries_strategy()) {
        let bytes = pack(&entries).unwrap();
        prop_assert_eq!(unpack(&bytes).unwrap(), entries);
    }

    #[test]
    fn system_tar_reads_what_we_write(entries in entries_strategy()) {
        prop_assume!(tool_available("tar"));
        let dir = tempfile::tempdir().unwrap();
        let archive = dir.path().join("a.tar.gz");
        std::fs::write(&archive, pack(&entries).unwrap()).unwrap();
        let out = dir.path().join("x");
        std::fs::create_dir(&out).unwrap();
        let status = Command::new("tar").arg("-xzf").arg(&archive).arg("-C").arg(&out).status().unwrap();
        prop_assert!(status.success());
        let mut expected = entries.clone();
        expected.sort_by(|a, b| a.path.cmp(&b.path));
        prop_assert_eq!(read_tree(&out).unwrap(), expected);
    }

    #[test]
    fn we_read_what_system_tar_writes(entries in entries_strategy()) {
        prop_assume!(tool_available("tar"));
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        write_entries(&src, &entries).unwrap();
        let archive = dir.path().join("b.tar.gz");
        let status = Command::new("tar").arg("-czf").arg(&archive).arg("-C").arg(&src).arg(".").status().unwrap();
        prop_assert!(status.success());
        let got: BTreeMap<String, Vec<u8>> =
            unpack(&std::fs::read(&archive).unwrap()).unwrap().into_iter().map(|e| (e.path, e.data)).collect();
        let want: BTreeMap<String, Vec<u8>> = entries.into_iter().map(|e| (e.path, e.data)).collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn low_entropy_text_compresses_below_a_tenth() {
    let line = "the quick brown fox jumps over the lazy dog 0123456789\n";
    let text: Vec<u8> = line.bytes().cycle().take(100 * 1024).collect();
    let packed = pack(&[SandboxEntry::new("big.txt", text.clone())]).unwrap();
    assert!(packed.len() < 10 * 1024, "packed {} bytes", packed.len());

    if tool_available("gzip") {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.txt");
        std::fs::write(&path, &text).unwrap();
        let out = Command::new("gzip").arg("-c").arg(&path).output().unwrap();
        assert!(out.status.success());
        assert!(
            out.stdout.len() < 10 * 1024,
            "oracle gzip {} bytes",
            out.stdout.len()
        );
        // Ours stays within a small constant of the reference compressor.
        assert!(packed.len() < out.stdout.len() + 1024);
    }
}
