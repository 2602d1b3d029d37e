//! Checks every shipped fixture file under a fixtures directory.

use std::path::Path;

use crate::command::corpus::Corpus;
use crate::kinematics::KinematicChain;
use crate::link::LinkProfile;
use crate::sim::Worksite;

use super::harness::MissionScript;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCheck {
    pub file: String,
    /// Short summary on success, error text on failure.
    pub result: Result<String, String>,
}

fn read(root: &Path, rel: &str) -> Result<String, String> {
    std::fs::read_to_string(root.join(rel)).map_err(|e| e.to_string())
}

fn json_files(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = std::fs::read_dir(dir)
        .map(|it| it.filter_map(Result::ok).map(|e| e.file_name().to_string_lossy().into_owned()).filter(|n| n.ends_with(".json")).collect())
        .unwrap_or_default();
    out.sort();
    out
}

pub fn validate_dir(root: &Path) -> Vec<FixtureCheck> {
    let mut checks = Vec::new();
    let mut push = |file: &str, result: Result<String, String>| checks.push(FixtureCheck { file: file.to_string(), result });

    let mut arm_dof = None;
    for file in ["arm6.json", "planar2r.json"] {
        let r = read(root, file).and_then(|t| KinematicChain::from_json(&t).map_err(|e| e.to_string()));
        if file == "arm6.json" {
            arm_dof = r.as_ref().ok().map(KinematicChain::dof);
        }
        push(file, r.map(|c| format!("{} joints", c.dof())));
    }

    let worksite = read(root, "worksite.json").and_then(|t| Worksite::from_json(&t).map_err(|e| e.to_string())).and_then(|w| {
        match arm_dof {
            Some(d) => w.check_chain(d).map_err(|e| e.to_string())?,
            None => return Err("arm6.json is needed to check the home configuration".into()),
        }
        Ok(format!("{} objects, {} regions", w.objects.len(), w.composition.regions.len()))
    });
    push("worksite.json", worksite);

    let corpus = (|| {
        let c = Corpus::load(&read(root, "commands/corpus.tsv")?, &read(root, "commands/scene.json")?, &read(root, "commands/gestures.json")?)
            .map_err(|e| e.to_string())?;
        let report = c.run();
        if let Some((line, why)) = report.failures.first() {
            return Err(format!("line {line}: {why}"));
        }
        Ok(format!("{} positive, {} negative", report.positives, report.negatives))
    })();
    push("commands/corpus.tsv", corpus);

    for name in json_files(&root.join("profiles")) {
        let rel = format!("profiles/{name}");
        let r = read(root, &rel).and_then(|t| LinkProfile::from_json(&t).map_err(|e| e.to_string()));
        push(&rel, r.map(|p| format!("{} bit/s, loss {}", p.bandwidth_bps, p.loss)));
    }

    for name in json_files(&root.join("missions")) {
        let rel = format!("missions/{name}");
        let r = read(root, &rel).and_then(|t| {
            let s = MissionScript::from_json(&t).map_err(|e| e.to_string())?;
            s.resolve(&root.join("missions")).map_err(|e| e.to_string())?;
            Ok(format!("{} steps", s.steps.len()))
        });
        push(&rel, r);
    }
    checks
}
