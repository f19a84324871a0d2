//! Checks flight states against the landing approach cone.

use safemon::odd::{check_odd, parse_odd_spec, FlightMetadata, Interval, OddParameter, OddSpec};

fn main() {
    let spec = OddSpec::landing_cone();
    println!("{}", spec.to_text());
    let states = [
        (
            "on glide path",
            FlightMetadata::new([2.0, -3.0, 0.0, 0.0, -2.0, 0.0]),
        ),
        (
            "too steep",
            FlightMetadata::new([2.0, -6.5, 0.0, 0.0, -2.0, 0.0]),
        ),
        (
            "banked and yawed",
            FlightMetadata::new([1.0, -3.0, 1.0, 8.0, -1.0, 15.0]),
        ),
        ("no distance", {
            let mut m = FlightMetadata::new([0.0, -3.0, 0.0, 0.0, 0.0, 0.0]);
            m.along_track_distance = None;
            m
        }),
    ];
    for (name, meta) in &states {
        let v = check_odd(&spec, meta).expect("complete spec");
        println!("{name:<18} {:?} {:?}", v.decision, v.reasons);
    }

    let mut narrow = parse_odd_spec(&spec.to_text()).expect("round trip");
    narrow.set_interval(OddParameter::Yaw, Interval::new(-20.0, 20.0));
    narrow.set_interval(OddParameter::Roll, Interval::new(-5.0, 5.0));
    let v = check_odd(&narrow, &states[2].1).expect("complete spec");
    println!("{:<18} {:?} {:?}", "custom cone", v.decision, v.reasons);
}
