use std::path::Path;

use coinfect::{fixtures, ModelParams};

fn load(name: &str) -> ModelParams {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn shipped_parameter_files_match_fixtures() {
    assert_eq!(load("p1.json"), fixtures::p1());
    assert_eq!(load("p2.json"), fixtures::p2());
    assert_eq!(load("p3.json"), fixtures::p3());
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"r":1,"K":7,"alpha1":2,"alpha2":1,"alpha3":1,"eta1":14,"eta2":3,
        "gamma1":0.01,"gamma2":0.01,"mu1":1,"mu2":2,"mu3":4,"rho1":0.1,"rho2":0.1,
        "rho3":0.1,"mu4p":1,"extra":0}"#;
    assert!(serde_json::from_str::<ModelParams>(text).is_err());
}
