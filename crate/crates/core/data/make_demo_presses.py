"""Regenerates the demo press files from smooth optical-density band models.

Each ink's transmittance is 10^-D(lambda) with D a sum of Gaussian absorption
bands. Run from this directory: python3 make_demo_presses.py
"""
import json
import math

GRID = [380 + 10 * i for i in range(36)]


def density(bands, floor=0.0):
    return [floor + sum(p * math.exp(-0.5 * ((w - c) / s) ** 2) for c, s, p in bands) for w in GRID]


def transmittance(bands, floor=0.0):
    return [round(10 ** -d, 6) for d in density(bands, floor)]


SUBSTRATE = [round(0.89 - 0.07 * math.exp(-0.5 * ((w - 380) / 25) ** 2), 6) for w in GRID]

INKS = {
    "C": transmittance([(640, 55, 1.05), (560, 40, 0.25), (420, 30, 0.06)], 0.02),
    "M": transmittance([(535, 38, 1.10), (440, 30, 0.18), (620, 30, 0.05)], 0.02),
    "Y": transmittance([(430, 40, 1.15), (380, 25, 0.40), (500, 20, 0.10)], 0.01),
    "K": transmittance([(430, 80, 0.15), (600, 120, 0.05)], 1.45),
    "R": transmittance([(520, 45, 1.20), (440, 45, 1.00), (590, 15, 0.15)], 0.02),
    "G": transmittance([(640, 45, 1.00), (430, 40, 1.00), (590, 25, 0.30)], 0.02),
    "B": transmittance([(600, 70, 1.10), (500, 35, 0.40)], 0.03),
    "O": transmittance([(470, 45, 1.20), (400, 30, 0.50), (540, 20, 0.25)], 0.01),
}


def press(press_id, names, dot_gain, sigma):
    return {
        "id": press_id,
        "inkset": {"n": len(names), "k": 2, "names": names},
        "substrate": SUBSTRATE,
        "inks": [{"name": n, "transmittance": INKS[n]} for n in names],
        "dot_gain": dot_gain,
        "noise_sigma": sigma,
        "drift": [1.0] * len(names),
        "yn_exponent": 2.0,
    }


with open("demo_cmyk.json", "w") as f:
    json.dump(press("demo-cmyk", ["C", "M", "Y", "K"], 0.1, 0.001), f, indent=1)
with open("demo_8ink.json", "w") as f:
    json.dump(press("demo-8ink", ["C", "M", "Y", "K", "R", "G", "B", "O"], 0.1, 0.001), f, indent=1)
