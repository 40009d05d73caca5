//! Pushing each object footprint to the target with one or two arms.

use tactile_servo::sim::{run_task, Shape, SimConfig, Task};

fn main() -> tactile_servo::Result<()> {
    for task in [Task::PushSingle, Task::PushDual] {
        for shape in Shape::ALL {
            let mut cfg = SimConfig::new(task);
            cfg.push.shape = shape;
            let log = run_task(&cfg, 1)?;
            let last = log.records.last().expect("at least one step");
            let [y, z, heading] = last.object.unwrap_or_default();
            println!(
                "{:<12} {:<14} {:?} in {:>4} steps, object at ({y:.0}, {z:.0}) mm heading {heading:.1} deg",
                task.name(),
                format!("{shape:?}"),
                log.termination,
                log.records.len()
            );
        }
    }
    Ok(())
}
