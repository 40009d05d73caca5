//! Closed-loop servoing of an ideal sensor onto a reference contact pose.

use tactile_servo::control::{servo_control, PidState};
use tactile_servo::params::ControllerParams;
use tactile_servo::se3::{exp_map, Pose, Twist};

fn main() -> tactile_servo::Result<()> {
    let params = ControllerParams::tracking();
    let pid = params.servo.pid()?;
    let cfg = params.servo.servo(false);
    let dt = 1.0 / 30.0;

    // sensor pose in the feature frame, starting 10 mm too far away and tilted
    let mut sensor_in_feature = Pose::from_euler_xyz_deg([2.0, -1.0, -4.0, 5.0, -3.0, 0.0]);
    let mut st = PidState::default();
    for k in 0..=150 {
        let (out, next) = servo_control(&cfg, &pid, &st, &sensor_in_feature.inverse(), dt)?;
        st = next;
        if k % 30 == 0 {
            println!("t = {:4.1} s  error (mm, deg) = {:?}", k as f64 * dt, out.error_mm_deg.map(|v| (v * 100.0).round() / 100.0));
        }
        // the control twist is expressed in the sensor frame
        sensor_in_feature = sensor_in_feature * exp_map(&Twist(out.u.0 * dt));
    }
    Ok(())
}
