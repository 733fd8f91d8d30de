//! Prints the blend weight of every schedule across the timestep range.

use hierdit::schedule::{ScheduleKind, ScheduleSpec};

fn main() -> hierdit::Result<()> {
    let kinds = [ScheduleKind::Cos, ScheduleKind::Sin, ScheduleKind::CosInv, ScheduleKind::Constant];
    let specs: Vec<ScheduleSpec> = kinds.iter().map(|&k| ScheduleSpec::new(k, 0.1, 28)).collect::<Result<_, _>>()?;
    print!("{:>4}", "t");
    for k in kinds {
        print!(" {:>8}", k.to_string());
    }
    println!();
    for t in (0..=28).step_by(4) {
        print!("{t:>4}");
        for s in &specs {
            print!(" {:>8.5}", s.lambda_at(t)?);
        }
        println!();
    }
    println!("large t is the noisy end: cos leans on the context path early in sampling, cosinv late");
    Ok(())
}
