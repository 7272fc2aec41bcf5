use std::fs;
use std::path::Path;

use codetations::layers::{apply_layers, collect_layers, LayerSelection, ADD_LAYER_TYPE};
use codetations::repo::{AnchorSpec, Repository};
use codetations::{Error, StoreRoot, TagStatus};
use serde_json::json;

fn add_layer(repo: &Repository, path: &str, at: usize, layer: &str, text: &str) {
    repo.add(
        path,
        &AnchorSpec::Range { start: at, end: at },
        ADD_LAYER_TYPE,
        json!({"layerName": layer, "insertText": text}),
    )
    .unwrap();
}

fn setup() -> (tempfile::TempDir, Repository) {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("src")).unwrap();
    fs::write(dir.path().join("src/a.txt"), "αβγ\n").unwrap();
    fs::write(dir.path().join("blob.bin"), [0xff, 0x00, 0xfe]).unwrap();
    let repo = Repository::open(dir.path()).unwrap();
    (dir, repo)
}

#[test]
fn offsets_are_scalar_values_and_binary_files_copy_verbatim() {
    let (dir, repo) = setup();
    add_layer(&repo, "src/a.txt", 2, "x", "[x]");
    let out = dir.path().join("out");
    let report = apply_layers(repo.root(), &LayerSelection::parse("x").unwrap(), &out).unwrap();
    assert_eq!(fs::read_to_string(out.join("src/a.txt")).unwrap(), "αβ[x]γ\n");
    assert_eq!(fs::read(out.join("blob.bin")).unwrap(), [0xff, 0x00, 0xfe]);
    assert!(!out.join(".codetations").exists());
    assert_eq!(report.files_written, 2);
    assert_eq!((report.splices[0].output_start, report.splices[0].output_end), (2, 5));
}

#[test]
fn unselected_and_unknown_layers() {
    let (dir, repo) = setup();
    add_layer(&repo, "src/a.txt", 0, "x", "X");
    let out = dir.path().join("out");
    let report = apply_layers(repo.root(), &LayerSelection::parse("nope").unwrap(), &out).unwrap();
    assert_eq!(report.insertions_applied, 0);
    assert_eq!(report.warnings, ["layer nope has no insertions"]);
    assert_eq!(fs::read_to_string(out.join("src/a.txt")).unwrap(), "αβγ\n");
}

#[test]
fn selection_validation() {
    assert!(matches!(LayerSelection::parse("a,b,a"), Err(Error::Invalid(_))));
    assert_eq!(LayerSelection::parse(" a , b ,").unwrap().names(), ["a", "b"]);
    assert!(LayerSelection::parse("").unwrap().names().is_empty());
}

#[test]
fn output_directory_must_be_empty() {
    let (dir, repo) = setup();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep"), "x").unwrap();
    let err = apply_layers(repo.root(), &LayerSelection::default(), &out).unwrap_err();
    assert!(matches!(err, Error::Invalid(_)), "{err}");
    assert_eq!(fs::read_to_string(out.join("keep")).unwrap(), "x");
}

#[test]
fn output_inside_repository_is_not_recursed() {
    let (dir, repo) = setup();
    let out = dir.path().join("build/layered");
    apply_layers(repo.root(), &LayerSelection::default(), &out).unwrap();
    assert!(!out.join("build").exists());
    assert!(out.join("src/a.txt").is_file());
}

#[test]
fn malformed_and_orphaned_tags_are_skipped_with_warnings() {
    let (dir, repo) = setup();
    add_layer(&repo, "src/a.txt", 1, "x", "1");
    repo.add(
        "src/a.txt",
        &AnchorSpec::Range { start: 0, end: 0 },
        ADD_LAYER_TYPE,
        json!({"layerName": "x"}),
    )
    .unwrap();
    repo.add("src/a.txt", &AnchorSpec::Range { start: 0, end: 1 }, ADD_LAYER_TYPE, json!({"layerName": "x", "insertText": "2", "color": "red"}))
        .unwrap();
    let root = StoreRoot::new(dir.path());
    let mut file = root.load("src/a.txt").unwrap().unwrap();
    let mut orphan = file.annotations[0].clone();
    orphan.id = uuid::Uuid::new_v4();
    orphan.status = TagStatus::Orphaned;
    file.annotations.push(orphan);
    root.save(&file).unwrap();

    let collection = collect_layers(&root).unwrap();
    assert_eq!(collection.layers["x"].len(), 1);
    assert_eq!(collection.warnings.len(), 3, "{:?}", collection.warnings);
    let report = apply_layers(&root, &LayerSelection::parse("x").unwrap(), &dir.path().join("out")).unwrap();
    assert_eq!(report.insertions_applied, 1);
    assert_eq!(fs::read_to_string(dir.path().join("out/src/a.txt")).unwrap(), "α1βγ\n");
}

#[test]
fn stale_file_without_selected_insertions_is_fine() {
    let (dir, repo) = setup();
    add_layer(&repo, "src/a.txt", 0, "x", "X");
    fs::write(dir.path().join("src/a.txt"), "changed\n").unwrap();
    let root = repo.root();
    assert!(apply_layers(root, &LayerSelection::default(), &dir.path().join("o1")).is_ok());
    let err = apply_layers(root, &LayerSelection::parse("x").unwrap(), &dir.path().join("o2")).unwrap_err();
    assert!(matches!(err, Error::StaleDocument { ref path } if path == "src/a.txt"));
    assert!(!Path::new(&dir.path().join("o2/src/a.txt")).exists());
}
