//! Simulated surface following on the ramp and hemisphere, and tracking a moving surface.

use tactile_servo::sim::{run_task, SimConfig, Task, TRANSIENT_S};

fn main() -> tactile_servo::Result<()> {
    for task in [Task::FollowRamp, Task::FollowHemisphere, Task::Track] {
        let log = run_task(&SimConfig::new(task), 1)?;
        print!("{:<18} {:?} after {} steps", task.name(), log.termination, log.records.len());
        if let Some((depth, tilt)) = log.steady_state_contact(TRANSIENT_S) {
            print!(", mean depth {depth:.2} mm, mean tilt {tilt:.2} deg");
        }
        println!();
    }
    Ok(())
}
