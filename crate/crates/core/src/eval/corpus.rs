use std::path::Path;

use serde::Deserialize;

use super::EvalError;
use crate::model::{parse_json, parse_problem, Problem};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    #[serde(rename = "problem", default)]
    problems: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    file: String,
    description: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    repair_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub file: String,
    pub problem: Problem,
    /// Natural-language statement, used when a gateway is configured.
    pub description: Option<String>,
    pub tags: Vec<String>,
    /// Number of repairs the problem needs before it can be solved, when
    /// known by construction.
    pub repair_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
}

const BUILTIN_FILES: &[(&str, &str)] = &[
    ("bilinear.ncx", include_str!("../../corpus/bilinear.ncx")),
    (
        "binary_selection.ncx",
        include_str!("../../corpus/binary_selection.ncx"),
    ),
    (
        "fault_ratio.ncx",
        include_str!("../../corpus/fault_ratio.ncx"),
    ),
    (
        "fault_unbound_one.ncx",
        include_str!("../../corpus/fault_unbound_one.ncx"),
    ),
    (
        "fault_unbound_three.ncx",
        include_str!("../../corpus/fault_unbound_three.ncx"),
    ),
    (
        "fault_unbound_two.ncx",
        include_str!("../../corpus/fault_unbound_two.ncx"),
    ),
    (
        "interference.ncx",
        include_str!("../../corpus/interference.ncx"),
    ),
    (
        "portfolio_qp.ncx",
        include_str!("../../corpus/portfolio_qp.ncx"),
    ),
    (
        "power_allocation.ncx",
        include_str!("../../corpus/power_allocation.ncx"),
    ),
    (
        "production_lp.ncx",
        include_str!("../../corpus/production_lp.ncx"),
    ),
    ("qos_ratio.ncx", include_str!("../../corpus/qos_ratio.ncx")),
    (
        "seeded_pair.ncx",
        include_str!("../../corpus/seeded_pair.ncx"),
    ),
    (
        "seeded_sqrt2.ncx",
        include_str!("../../corpus/seeded_sqrt2.ncx"),
    ),
    (
        "seeded_tight.ncx",
        include_str!("../../corpus/seeded_tight.ncx"),
    ),
    (
        "seeded_wide.ncx",
        include_str!("../../corpus/seeded_wide.ncx"),
    ),
];

const BUILTIN_MANIFESTS: &[(&str, &str)] = &[
    ("builtin", include_str!("../../corpus/builtin.toml")),
    (
        "fault_injection",
        include_str!("../../corpus/fault_injection.toml"),
    ),
    (
        "seeded_infeasible",
        include_str!("../../corpus/seeded_infeasible.toml"),
    ),
];

fn parse_file(name: &str, text: &str) -> Result<Problem, String> {
    let parsed = if name.ends_with(".json") {
        parse_json(text.as_bytes())
    } else {
        parse_problem(text)
    };
    parsed.map_err(|e| e.to_string())
}

impl Corpus {
    /// Builds a corpus from manifest text, reading problem files through
    /// `read`. Every file is parsed; all failures are reported together.
    pub fn from_manifest(
        manifest: &str,
        read: impl Fn(&str) -> Result<String, String>,
    ) -> Result<Corpus, EvalError> {
        let m: Manifest =
            toml::from_str(manifest).map_err(|e| EvalError::Manifest(e.to_string()))?;
        if m.problems.is_empty() {
            return Err(EvalError::Manifest(format!(
                "corpus `{}` lists no problems",
                m.name
            )));
        }
        let mut entries = Vec::new();
        let mut failures = Vec::new();
        for e in m.problems {
            match read(&e.file).and_then(|text| parse_file(&e.file, &text)) {
                Ok(problem) => {
                    let name = Path::new(&e.file)
                        .file_stem()
                        .map_or_else(|| e.file.clone(), |s| s.to_string_lossy().into_owned());
                    entries.push(CorpusEntry {
                        name,
                        file: e.file,
                        problem,
                        description: e.description,
                        tags: e.tags,
                        repair_depth: e.repair_depth,
                    });
                }
                Err(msg) => failures.push((e.file, msg)),
            }
        }
        if !failures.is_empty() {
            return Err(EvalError::CorpusLoad(failures));
        }
        Ok(Corpus {
            name: m.name,
            entries,
        })
    }

    /// Loads a manifest from disk; problem paths are relative to it.
    pub fn load(path: &Path) -> Result<Corpus, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Corpus::from_manifest(&text, |f| {
            std::fs::read_to_string(dir.join(f)).map_err(|e| e.to_string())
        })
    }

    /// One of the corpora shipped with the crate: `builtin`,
    /// `fault_injection` or `seeded_infeasible`.
    pub fn builtin(name: &str) -> Option<Corpus> {
        let (_, manifest) = BUILTIN_MANIFESTS.iter().find(|(n, _)| *n == name)?;
        let corpus = Corpus::from_manifest(manifest, |f| {
            BUILTIN_FILES
                .iter()
                .find(|(n, _)| *n == f)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| format!("no built-in file `{f}`"))
        });
        Some(corpus.expect("built-in corpora parse"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_MANIFESTS.iter().map(|(n, _)| *n)
    }

    /// Source text of a built-in problem file.
    pub fn builtin_source(file: &str) -> Option<&'static str> {
        BUILTIN_FILES
            .iter()
            .find(|(n, _)| *n == file)
            .map(|(_, t)| *t)
    }

    /// A corpus of already-parsed problems.
    pub fn from_problems(name: &str, problems: impl IntoIterator<Item = Problem>) -> Corpus {
        Corpus {
            name: name.to_string(),
            entries: problems
                .into_iter()
                .map(|problem| CorpusEntry {
                    name: problem.name.clone(),
                    file: String::new(),
                    problem,
                    description: None,
                    tags: Vec::new(),
                    repair_depth: None,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_corpora_load() {
        assert_eq!(Corpus::builtin("builtin").unwrap().len(), 12);
        assert_eq!(Corpus::builtin("fault_injection").unwrap().len(), 5);
        assert_eq!(Corpus::builtin("seeded_infeasible").unwrap().len(), 4);
        assert!(Corpus::builtin("nope").is_none());
    }

    #[test]
    fn every_bad_file_is_listed() {
        let manifest = "name = \"t\"\n[[problem]]\nfile = \"a.ncx\"\n[[problem]]\nfile = \"b.ncx\"\n[[problem]]\nfile = \"c.ncx\"\n";
        let read = |f: &str| match f {
            "a.ncx" => Ok("var x\nminimize x ^ 2".to_string()),
            "b.ncx" => Ok("var x\nminimize".to_string()),
            _ => Err("missing".to_string()),
        };
        match Corpus::from_manifest(manifest, read) {
            Err(EvalError::CorpusLoad(fails)) => {
                let files: Vec<&str> = fails.iter().map(|(f, _)| f.as_str()).collect();
                assert_eq!(files, ["b.ncx", "c.ncx"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_malformed_manifests() {
        assert!(matches!(
            Corpus::from_manifest("name = \"e\"\n", |_| Err(String::new())),
            Err(EvalError::Manifest(_))
        ));
        assert!(matches!(
            Corpus::from_manifest("name = ", |_| Err(String::new())),
            Err(EvalError::Manifest(_))
        ));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.ncx"), "var x in [0, 1]\nminimize x").unwrap();
        std::fs::write(
            dir.path().join("c.toml"),
            "name = \"disk\"\n[[problem]]\nfile = \"p.ncx\"\n",
        )
        .unwrap();
        let c = Corpus::load(&dir.path().join("c.toml")).unwrap();
        assert_eq!(c.entries[0].name, "p");
    }
}
