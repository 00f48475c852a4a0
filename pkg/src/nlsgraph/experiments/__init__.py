"""Sweeps, uniqueness probes, threshold searches and the non-uniqueness pipeline."""
from .miranda import FMaps, MirandaRectangle, NonuniquenessReport, f_maps, miranda_find, nonuniqueness_run
from .sweep import SweepRecord, UniquenessReport, sweep_mu, sweep_summary, uniqueness_probe
from .thresholds import LevelEstimate, ThresholdResult, ground_level, threshold_length, threshold_mass

__all__ = [
    "FMaps", "MirandaRectangle", "NonuniquenessReport", "f_maps", "miranda_find", "nonuniqueness_run",
    "SweepRecord", "UniquenessReport", "sweep_mu", "sweep_summary", "uniqueness_probe",
    "LevelEstimate", "ThresholdResult", "ground_level", "threshold_length", "threshold_mass",
]
