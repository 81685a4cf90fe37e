"""Thermal-only fever and mask screening.

Radiometric frames are normalized with a temperature-constrained band, faces
are found either by a warm-blob baseline or by an external detector, and each
face is screened for fever (maximum face temperature) and mask wearing (the
cold lower-face patch). Evaluation utilities cover IOU, AP, meanIOU,
precision/recall, lux-bucket stratification and the chronological split.
"""

__version__ = "0.1.0"
