//! Compares analytic gradients of the combined loss with central
//! differences on random small models.

use gated_idm::idm::{gradient_check, IdmArch, LossConfig, GRADCHECK_STEP};
use gated_idm::world::ObservationLayout;

fn main() {
    let arch = IdmArch {
        encoder_hidden: vec![16, 16],
        head_hidden: 8,
    };
    let report = gradient_check(0, 5, 8, ObservationLayout::new(2, 1), &arch, &LossConfig::default()).expect("gradcheck");
    for (i, e) in report.per_model.iter().enumerate() {
        println!("model {i}: max relative error {e:.3e}");
    }
    println!(
        "{} parameters per model, step {GRADCHECK_STEP:e}, worst {:.3e}",
        report.params_per_model,
        report.max_rel_error()
    );
}
