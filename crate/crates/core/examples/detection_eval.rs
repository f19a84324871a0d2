//! IoU, greedy matching and confidence-threshold calibration on a toy set.

use safemon::detect::{calibrate_conf_threshold, iou, match_detections, BBox, Detection};

fn det(b: [f64; 4], confidence: f64) -> Detection {
    Detection {
        bbox: BBox::new(b[0], b[1], b[2], b[3]).expect("valid box"),
        label: 0,
        confidence,
    }
}

fn main() {
    let gt = BBox::new(10.0, 10.0, 50.0, 40.0).expect("valid box");
    let near = BBox::new(12.0, 11.0, 52.0, 41.0).expect("valid box");
    println!("iou(gt, near) = {:.4}", iou(&gt, &near));

    let dets = [
        det([12.0, 11.0, 52.0, 41.0], 0.9),
        det([11.0, 10.0, 50.0, 39.0], 0.6),
        det([70.0, 5.0, 90.0, 20.0], 0.3),
    ];
    for tau_conf in [0.0, 0.5, 0.95] {
        let m = match_detections(&dets, &[gt], 0.7, tau_conf);
        println!(
            "tau_conf {tau_conf:.2}: tp {} fp {} fn {} correct {}",
            m.tp,
            m.fp,
            m.fn_,
            m.is_correct()
        );
    }

    let validation: Vec<(Vec<Detection>, Vec<BBox>)> = vec![
        (dets.to_vec(), vec![gt]),
        (
            vec![det([0.0, 0.0, 20.0, 20.0], 0.8)],
            vec![BBox::new(1.0, 1.0, 20.0, 21.0).expect("valid box")],
        ),
        (vec![det([30.0, 30.0, 40.0, 40.0], 0.55)], vec![]),
    ];
    let cal = calibrate_conf_threshold(
        validation.iter().map(|(d, g)| (d.as_slice(), g.as_slice())),
        0.7,
    );
    println!(
        "calibrated tau_conf {:.3}: precision {:.3} recall {:.3} f1 {:.3}",
        cal.threshold, cal.precision, cal.recall, cal.f1
    );
}
