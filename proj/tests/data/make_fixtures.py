"""Regenerates the small MAT-file fixtures used by the dataio tests."""
import numpy as np
import scipy.io as sio

n = np.arange(1200)
cwru = np.sin(2 * np.pi * 50 * n / 12000.0) + 0.001 * n
sio.savemat("cwru_97.mat", {
    "X097_DE_time": cwru.reshape(-1, 1),
    "X097_FE_time": (0.5 * cwru).reshape(-1, 1),
    "X097RPM": np.array([[1797.0]]),
}, do_compression=False)
sio.savemat("cwru_97_z.mat", {
    "X097_DE_time": cwru.reshape(-1, 1),
    "X097RPM": np.array([[1797.0]]),
}, do_compression=True)

gs = np.cos(2 * np.pi * 3 * np.arange(977) / 977.0)
bearing = {"gs": gs.reshape(-1, 1), "sr": np.array([[97656.0]]), "load": np.array([[270.0]]),
           "rate": np.array([[25.0]])}
sio.savemat("mfpt_baseline.mat", {"bearing": bearing}, do_compression=True)

vib = np.linspace(-1.0, 1.0, 640)
dt = [("Name", "O"), ("Type", "O"), ("Raster", "O"), ("Data", "O")]
y = np.empty((1, 3), dtype=dt)
y[0, 0] = ("force", "Mechanic", "Mech_4kHz", np.ones((1, 40)))
y[0, 1] = ("phase_current_1", "Electric", "HostService", np.zeros((1, 640)))
y[0, 2] = ("vibration_1", "Mechanic", "HostService", vib.reshape(1, -1))
rec = np.empty((1, 1), dtype=[("Info", "O"), ("Y", "O")])
rec[0, 0] = ("note", y)
sio.savemat("pu_K001_1.mat", {"N15_M07_F10_K001_1": rec}, do_compression=True)

mixed = {
    "i16": np.array([[1, -2, 3]], dtype=np.int16),
    "u8": np.array([[7, 8]], dtype=np.uint8),
    "f32": np.array([[0.5, 1.5]], dtype=np.float32),
    "text": "hello",
    "cells": np.array([[np.array([[1.0]]), "x"]], dtype=object),
    "grid": np.arange(6, dtype=np.float64).reshape(2, 3),
}
sio.savemat("mixed_types.mat", mixed, do_compression=False)
