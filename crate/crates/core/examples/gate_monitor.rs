//! Drives the hierarchical switching logic with a hand-made gate stream.

use gated_idm::executor::{truncate_to_next_low, ExecutorConfig, GateEvent, GateMonitor};

fn main() {
    let cfg = ExecutorConfig {
        tau: 0.5,
        persistence: 3,
        max_switches: Some(2),
        ..ExecutorConfig::default()
    };
    let stream = [
        0.1, 0.2, 0.7, 0.3, 0.8, 0.9, 0.95, 0.9, 0.4, 0.2, 0.1, 0.05, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.8, 0.9, 0.9,
    ];
    let mut monitor = GateMonitor::new(&cfg);
    for (t, &g) in stream.iter().enumerate() {
        match monitor.observe(g) {
            GateEvent::None => {}
            GateEvent::Engage => println!("t={t:>2} gate={g:.2}: hand over to the policy (switch {})", monitor.switches),
            GateEvent::Release => println!("t={t:>2} gate={g:.2}: back to the plan"),
        }
    }
    println!("switch budget exhausted: {}", !monitor.can_engage());

    let predicted = [0.1, 0.9, 0.9, 0.8, 0.3, 0.2, 0.9];
    println!("after returning at queue index 1, resume at {}", truncate_to_next_low(1, &predicted, cfg.tau));
}
