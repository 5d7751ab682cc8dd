use serde_json::Value;
use transforecast_web::{link_title, parse_scored, planted_graph, roc_pr, sbm_demo};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn roc_pr_on_a_perfect_ranking() {
    let r = parse(roc_pr("0.9,1\n0.8,1\n# comment\n\n0.3,0\n0.1 0\n"));
    assert_eq!(r["n"], 4);
    assert_eq!(r["auroc"], 1.0);
    assert_eq!(r["ap"], 1.0);
    let roc = r["roc"].as_array().unwrap();
    assert_eq!(roc.first().unwrap(), &serde_json::json!([0.0, 0.0]));
    assert_eq!(roc.last().unwrap(), &serde_json::json!([1.0, 1.0]));
}

#[test]
fn roc_pr_reports_input_errors() {
    assert!(parse(roc_pr("0.5,1\n0.4,1\n"))["error"].is_string());
    assert!(parse(roc_pr("0.5,2\n"))["error"].as_str().unwrap().contains("line 1"));
    assert!(parse_scored("x,1").is_err());
    assert_eq!(parse_scored("1,true\n2,false").unwrap(), (vec![1.0, 2.0], vec![true, false]));
}

#[test]
fn planted_blocks_are_found() {
    let (g, truth) = planted_graph(3, 10, 0.9, 0.1, 4).unwrap();
    assert_eq!(g.len(), 30);
    assert_eq!(truth.iter().filter(|&&b| b == 2).count(), 10);
    let r = parse(sbm_demo(3, 10, 0.9, 0.1, 2000, 4));
    assert!(r["nmi"].as_f64().unwrap() >= 0.9, "{r}");
    assert_eq!(r["coords"].as_array().unwrap().len(), 30);
    assert!(parse(sbm_demo(1, 1, 0.9, 0.1, 10, 0))["error"].is_string());
    assert!(parse(sbm_demo(2, 5, 1.5, 0.1, 10, 0))["error"].is_string());
}

#[test]
fn linkage_picks_the_perturbed_title() {
    let r = parse(link_title(
        "Efficacy of imatinib in chronic myeloid leukaemia: a randomised trial",
        "Efficacy of imatinib in chronic myeloid leukemia. A randomized trial\nA randomized trial of statins in heart failure\n",
    ));
    assert_eq!(r["decision"]["candidate"], "c1");
    assert_eq!(r["candidates"].as_array().unwrap().len(), 2);
    let best = &r["candidates"][0];
    assert!(best["cosine"].as_f64().unwrap() > r["candidates"][1]["cosine"].as_f64().unwrap());
    assert!(parse(link_title("anything", "\n\n"))["error"].is_string());
}
