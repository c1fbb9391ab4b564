//! The verification suite as a library call.

fn main() {
    let (checks, _) = qcseis::selftest::run_all(0);
    for c in &checks {
        println!("{} {:<40} {:6.2}s  {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.seconds, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    std::process::exit(i32::from(failed > 0));
}
