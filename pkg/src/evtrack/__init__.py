"""evtrack: event-camera hand tracking pipeline.

Event ingestion and windowing, LNES-Fast single-channel frames, wrist
localization and ROI cropping, geometric auxiliary statistics, a
lightweight multi-task network with reverse-mode autodiff, the weighted
multi-task loss, and PCK/AUC evaluation.
"""

__version__ = "0.1.0"
