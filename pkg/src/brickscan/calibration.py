"""Recorded grouping operating points for the default detection profile.

The two settings below were read off a committed calibration run of the
full default pipeline (seed 7: 400 positives, 1200 negatives, height
channel, 7 trained stages, 1063 raw windows on the held-out wall).  The
low setting keeps every cluster and is the dense-labels operating point;
the high setting trades label multiplicity for precision.  Numbers from
that run are kept here so reruns have a reference; the run itself is
reproducible byte for byte from the seed.
"""

CALIBRATED_LOW = 1
CALIBRATED_HIGH = 10

# Measured on the committed run, grouped at each setting (eps 0.2,
# matcher IoU 0.5 against exact annotations, 46 bricks of which 34 are
# laid horizontally).
FROZEN_RUN = {
    "seed": 7,
    "stages": 7,
    "features": 33,
    "raw_windows": 1063,
    "low": {
        "min_neighbors": CALIBRATED_LOW,
        "detections": 46,
        "precision": 0.717,
        "recall_H": 0.971,
        "mean_labels_per_brick": 1.353,
        "detected_H_share_with_1_to_5_labels": 1.0,
    },
    "high": {
        "min_neighbors": CALIBRATED_HIGH,
        "detections": 30,
        "precision": 0.900,
        "recall_H": 0.794,
        "mean_labels_per_brick": 1.034,
    },
    "default_sweep_detections": {1: 46, 5: 36, 25: 21, 50: 5, 100: 0,
                                 150: 0},
}
