use envcore::sim::*;
#[test]
fn probe() {
    let t = std::time::Instant::now();
    let r = run_efficiency_study(&ScenarioSpec::s1(105), 2, &StudyOptions::default()).unwrap();
    println!("S1 2 reps bic {:.1}s {:?}", t.elapsed().as_secs_f64(), r.dimension_frequencies);
    let t = std::time::Instant::now();
    let _ = run_efficiency_study(&ScenarioSpec::s2(105), 2, &StudyOptions::default()).unwrap();
    println!("S2 2 reps {:.1}s", t.elapsed().as_secs_f64());
    let t = std::time::Instant::now();
    let _ = run_bias_sweep(&ScenarioSpec::bias_sweep(105), &(1..=20).collect::<Vec<_>>(), 2, &StudyOptions { dim: DimChoice::Fixed(6), ..Default::default() }).unwrap();
    println!("bias 2 reps {:.1}s", t.elapsed().as_secs_f64());
    let t = std::time::Instant::now();
    let _ = run_ecm_study(&ScenarioSpec::ecm_star(105), 2, &StudyOptions { dim: DimChoice::Fixed(3), ..Default::default() }).unwrap();
    println!("ecm 2 reps {:.1}s", t.elapsed().as_secs_f64());
    let t = std::time::Instant::now();
    let _ = run_size_calibration(&ScenarioSpec::null_test(105), 1, 20, &StudyOptions { dim: DimChoice::Fixed(1), ..Default::default() }).unwrap();
    println!("null 20 reps {:.1}s", t.elapsed().as_secs_f64());
}
