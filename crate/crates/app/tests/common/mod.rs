#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tetriblend_core::{shapes, write_obj, TriangleMesh};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub rest: PathBuf,
    pub targets: Vec<PathBuf>,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn targets_arg(&self) -> String {
        self.targets.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
    }
}

pub fn bar() -> TriangleMesh {
    shapes::box_bar(3.0, 1.0, 1.0, 6, 2, 2)
}

pub fn bar_targets() -> Vec<TriangleMesh> {
    let rest = bar();
    vec![shapes::bend_about_y(&rest, 1.0, 3.0), shapes::twist_about_x(&rest, 1.2, 0.0, 3.0)]
}

pub fn write_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, mesh: &TriangleMesh| {
        let p = dir.path().join(name);
        write_obj(mesh, &p).unwrap();
        p
    };
    let rest = write("rest.obj", &bar());
    let targets = bar_targets()
        .iter()
        .enumerate()
        .map(|(k, m)| write(&format!("target{}.obj", k + 1), m))
        .collect();
    Fixture { dir, rest, targets }
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}
