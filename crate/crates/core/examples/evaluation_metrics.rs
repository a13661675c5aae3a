//! Scores a handful of hand-written predictions: gender accuracy overall and
//! per coarse age group, age MAE, exact and one-off decade accuracy.
//!
//! cargo run --example evaluation_metrics

use mga::data::Gender;
use mga::eval::{compute_metrics, Truth};
use mga::groups::AgeGroupScheme;
use mga::models::Prediction;

fn main() -> mga::Result<()> {
    // (true age, true gender, predicted female probability, predicted age)
    let rows = [
        (8.0, Gender::Female, 0.81, 12.0),
        (16.0, Gender::Male, 0.62, 19.0),
        (27.0, Gender::Male, 0.10, 31.0),
        (34.0, Gender::Female, 0.93, 33.0),
        (45.0, Gender::Female, 0.71, 58.0),
        (61.0, Gender::Male, 0.44, 55.0),
        (73.0, Gender::Female, 0.38, 70.0),
    ];
    let predictions: Vec<Prediction> = rows
        .iter()
        .map(|&(_, _, female, age)| {
            let mut p = Prediction::gender_only(&[1.0 - female, female]);
            p.age = Some(age);
            p
        })
        .collect();
    let truths: Vec<Truth> = rows.iter().map(|&(age, gender, _, _)| Truth { age, gender }).collect();
    let report = compute_metrics(&predictions, &truths, &AgeGroupScheme::default())?;
    println!("{}", report.to_json());
    Ok(())
}
