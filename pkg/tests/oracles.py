"""Independent brute-force oracles for the loss functions.

Everything here is written with plain Python loops over scalars, no torch
ops, so the values are derived independently of the vectorized
implementations they check. Inputs are nested lists or numpy arrays.
"""
import math

import numpy as np


def mean_log_one_minus(probs) -> float:
    flat = np.asarray(probs, dtype=np.float64).ravel()
    total = 0.0
    for p in flat:
        total += math.log(1.0 - p)
    return total / len(flat)


def mean_log(probs) -> float:
    flat = np.asarray(probs, dtype=np.float64).ravel()
    total = 0.0
    for p in flat:
        total += math.log(p)
    return total / len(flat)


def adversarial_discriminator_value(real_probs, fake_probs) -> float:
    return mean_log(real_probs) + mean_log_one_minus(fake_probs)


def mean_abs_diff(a, b) -> float:
    fa = np.asarray(a, dtype=np.float64).ravel()
    fb = np.asarray(b, dtype=np.float64).ravel()
    assert fa.shape == fb.shape
    total = 0.0
    for x, y in zip(fa, fb):
        total += abs(x - y)
    return total / len(fa)


def extract(image, labels, label_id):
    """Zero out pixels not carrying label_id; image CHW, labels HW."""
    image = np.asarray(image, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.zeros_like(image)
    for c in range(image.shape[0]):
        for i in range(image.shape[1]):
            for j in range(image.shape[2]):
                if labels[i, j] == label_id:
                    out[c, i, j] = image[c, i, j]
    return out


def margin_perceptual_value(layer_dists, margins) -> float:
    total = 0.0
    for d, eps in zip(layer_dists, margins):
        total += max(0.0, d - eps)
    return total


def component_adversarial_value(prob_of, fake, real, fake_labels, real_labels,
                                component_labels) -> tuple[float, float]:
    """prob_of(image CHW) -> scalar probability; single scale, 1x1 grid."""
    n = len(component_labels)
    gen = 0.0
    real_term = 0.0
    for label_id in component_labels:
        gen += math.log(1.0 - prob_of(extract(fake, fake_labels, label_id))) / n
        real_term += math.log(prob_of(extract(real, real_labels, label_id))) / n
    return gen, real_term


def feature_match_value(feature_of, fake, reference, fake_labels, ref_labels,
                        component_labels) -> float:
    """feature_of(image CHW) -> list of feature arrays; single scale."""
    n = len(component_labels)
    total = 0.0
    for label_id in component_labels:
        ff = feature_of(extract(fake, fake_labels, label_id))
        fr = feature_of(extract(reference, ref_labels, label_id))
        for a, b in zip(ff, fr):
            total += mean_abs_diff(a, b) / n
    return total
