//! Building the oracle bank from a budget and a cost-fidelity curve:
//! each feasible batch size becomes one oracle, and the variance trades
//! batch averaging against the fidelity each draw can afford.

use std::sync::Arc;

use eegrad::oracle::{AggregationCost, CostFunction, CostModel, NoiseShape, OracleBank};

fn main() {
    let model = CostModel {
        cost: CostFunction::Power {
            scale: 1.0,
            exponent: 2.0,
        },
        aggregation: AggregationCost::PerUnit { rate: 0.5 },
        budget: 40.0,
        batch_cap: None,
    };

    let bank = OracleBank::from_cost_model(
        Arc::new(|w: &[f64]| w.to_vec()),
        NoiseShape::SquaredGradient,
        &model,
        2,
    )
    .unwrap();

    println!(
        "budget {}: {} feasible batch sizes",
        model.budget,
        bank.len()
    );
    println!("{:>3} {:>12} {:>12}", "n", "agg cost", "sigma^2");
    let best = bank.optimal_index() as u32;
    for n in (1..=bank.len() as u32).filter(|&n| n <= 8 || n.abs_diff(best) <= 2) {
        println!(
            "{n:>3} {:>12.2} {:>12.4}{}",
            model.aggregation_cost(n),
            model.sigma_sq(n).unwrap(),
            if n == best { "  <- lowest" } else { "" }
        );
    }
    println!(
        "\nbest batch size: n = {} (sigma^2 = {:.4})",
        best,
        bank.sigma_star_sq()
    );
    println!("the selector is pointed at this bank without being told any of it");
}
