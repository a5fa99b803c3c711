//! Regenerates `data/reference_ocv.json` from the OCV template.
//!
//!     cargo run -p gmmee-lab --example gen_reference_ocv

use std::path::Path;

fn main() {
    let fit = gmmee_lab::reference::fit_reference_ocv().expect("template fit");
    let json = serde_json::to_string_pretty(&fit.curve).expect("serialize");
    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/reference_ocv.json");
    std::fs::write(&out, json + "\n").expect("write fixture");
    eprintln!("wrote {} (rmse {:.3e} V, cond {:.3e})", out.display(), fit.rmse, fit.condition);
}
