//! One summary table over whatever artifacts the output directory holds,
//! ordered like the construction: Dirichlet spectrum → β/B → limit spectrum
//! → cell tensors → ν → λ₁ → Λ_ε → fine check.

use std::path::Path;

use serde_json::Value;

use crate::artifacts::Artifacts;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::validate::{Acceptance, ACCEPTANCE};

fn load(dir: &Path, name: &str) -> Option<Value> {
    let text = std::fs::read_to_string(dir.join(name)).ok()?;
    serde_json::from_str(&text).ok()
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.6}"),
        None => v.to_string(),
    }
}

fn list(v: Option<&Value>, take: usize, f: impl Fn(&Value) -> String) -> String {
    match v.and_then(Value::as_array) {
        Some(a) if !a.is_empty() => {
            let mut s: Vec<String> = a.iter().take(take).map(f).collect();
            if a.len() > take {
                s.push(format!("… ({} total)", a.len()));
            }
            s.join(", ")
        }
        _ => "none".into(),
    }
}

fn csv_rows(dir: &Path, name: &str) -> Option<usize> {
    let mut r = csv::Reader::from_path(dir.join(name)).ok()?;
    Some(r.records().count())
}

struct Row {
    stage: &'static str,
    source: &'static str,
    summary: String,
}

fn rows(dir: &Path) -> Vec<Row> {
    let missing = || "not computed".to_string();
    let micro = load(dir, "micro.json");
    let cell = load(dir, "cell.json");
    let predict = load(dir, "predict.json");
    let caseb = load(dir, "caseb.json");
    let fine = load(dir, "fine.json");
    let fine_level = micro.as_ref().and_then(|m| m["levels"].as_array().and_then(|l| l.last()).cloned());
    let mut out = vec![Row {
        stage: "Dirichlet spectrum of Q0",
        source: "micro.json",
        summary: fine_level
            .as_ref()
            .map(|l| {
                format!(
                    "{}; poles {}",
                    list(l.get("dirichlet"), 4, |d| num(&d["value"])),
                    list(l.get("poles"), 3, num)
                )
            })
            .unwrap_or_else(missing),
    }];
    out.push(Row {
        stage: "beta / B",
        source: "beta.csv",
        summary: csv_rows(dir, "beta.csv").map(|n| format!("{n} grid points")).unwrap_or_else(missing),
    });
    out.push(Row {
        stage: "limit spectrum",
        source: "micro.json",
        summary: micro
            .as_ref()
            .map(|m| {
                list(m.get("limit_spectrum"), 5, |e| {
                    format!("{} ({}, x{})", num(&e["value"]), e["kind"].as_str().unwrap_or("?"), e["multiplicity"])
                })
            })
            .unwrap_or_else(missing),
    });
    out.push(Row {
        stage: "cell tensors",
        source: "cell.json",
        summary: cell
            .as_ref()
            .map(|c| {
                format!(
                    "lambda0 {}: A^hom eigenvalues {}, C {}, P_int {}, |K| {}",
                    num(&c["lambda0"]),
                    list(c.get("a_hom_eigenvalues"), 2, num),
                    num(&c["c"]),
                    num(&c["p_int"]),
                    num(&c["k_norm"]["extrapolated"])
                )
            })
            .unwrap_or_else(missing),
    });
    out.push(Row {
        stage: "homogenized nu",
        source: "predict.json",
        summary: predict
            .as_ref()
            .map(|p| list(p.get("nu"), 4, |l| format!("{} (x{})", num(&l[1]), l[2])))
            .unwrap_or_else(missing),
    });
    out.push(Row {
        stage: "lambda1",
        source: "predict.json, caseb.json",
        summary: {
            let mut s = predict
                .as_ref()
                .map(|p| {
                    list(p.get("branches"), 6, |b| match b["case"].as_str() {
                        Some(case) if b["lambda1"].is_number() => {
                            format!("{} [{case}] {}", num(&b["lambda0"]), num(&b["lambda1"]))
                        }
                        Some(case) => format!("{} [{case}] per nu", num(&b["lambda0"])),
                        None => format!("{} skipped", num(&b["lambda0"])),
                    })
                })
                .unwrap_or_else(missing);
            if let Some(c) = &caseb {
                s.push_str(&format!(
                    "; case b mode {}: lambda1 {}",
                    c["mode_index"],
                    num(&c["lambda1"])
                ));
            }
            s
        },
    });
    out.push(Row {
        stage: "Lambda_eps",
        source: "predictions.csv",
        summary: csv_rows(dir, "predictions.csv").map(|n| format!("{n} predictions")).unwrap_or_else(missing),
    });
    out.push(Row {
        stage: "fine check",
        source: "fine.json",
        summary: fine
            .as_ref()
            .map(|f| {
                list(f.get("rates"), 6, |r| {
                    let slope = r["slope"].as_f64().map_or("none".into(), |s| format!("{s:.3}"));
                    format!("{}: slope {slope} ({})", num(&r["lambda0"]), r["verdict"].as_str().unwrap_or("?"))
                })
            })
            .unwrap_or_else(missing),
    });
    out
}

fn table(dir: &Path) -> String {
    let mut s = String::from("| stage | source | summary |\n|---|---|---|\n");
    for r in rows(dir) {
        s.push_str(&format!("| {} | {} | {} |\n", r.stage, r.source, r.summary.replace('|', "/")));
    }
    let acceptance: Option<Acceptance> = load(dir, ACCEPTANCE).and_then(|v| serde_json::from_value(v).ok());
    if let Some(a) = acceptance {
        s.push_str(&format!("\nAcceptance ({}):\n\n| criterion | title | result | failing checks |\n|---|---|---|---|\n", a.inclusion));
        for c in &a.criteria {
            let failing: Vec<String> = c.checks.iter().filter(|k| !k.passed).map(|k| k.describe()).collect();
            s.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                c.id,
                c.title,
                if c.passed { "pass" } else { "fail" },
                if failing.is_empty() { c.notes.join("; ").replace('|', "/") } else { failing.join("; ") }
            ));
        }
    }
    s
}

pub fn run(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    let text = table(&cfg.output.dir);
    let mut art = Artifacts::new(&cfg.output.dir, "report", arguments)?;
    art.write("report.md", text.as_bytes())?;
    art.finish(cfg)?;
    print!("{text}");
    Ok(0)
}
