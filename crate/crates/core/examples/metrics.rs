//! Restoration metrics on a toy prediction, and the peak amplitude each
//! reading of the PSNR formula implies for reference (RMSE, PSNR) pairs.

use qcseis::objectives::{mae, psnr, rmse, ssim, SampleMetrics, EvalReport};
use qcseis::selftest::{PsnrReadings, REFERENCE_PSNR};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let y: Vec<f64> = (0..64).map(|i| (i as f64 * 0.2).sin()).collect();
    let yhat: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
    println!("mae {:.4}  rmse {:.4}  psnr {:.2} dB  ssim {:.4}", mae(&y, &yhat)?, rmse(&y, &yhat)?, psnr(&y, &yhat)?, ssim(&y, &yhat)?);
    println!("identical signals: psnr {} ssim {}", psnr(&y, &y)?, ssim(&y, &y)?);

    let mut report = EvalReport::new("demo");
    report.samples.push(SampleMetrics::compute(&y, &yhat)?);
    report.samples.push(SampleMetrics::compute(&y, &y)?);
    report.write_csv(std::io::stdout())?;

    println!("\nrmse    psnr_db  MAX(20log10)  MAX(10log10)  MAX(10ln)");
    for &(r, p) in &REFERENCE_PSNR {
        let m = PsnrReadings::new(r, p);
        println!("{:.4}  {:.4}  {:12.4}  {:12.2}  {:9.4}", r, p, m.max_amplitude_20log10, m.max_literal_log10, m.max_literal_ln);
    }
    Ok(())
}
