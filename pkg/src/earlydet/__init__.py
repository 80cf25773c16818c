"""Streaming early audio-event detection.

Two dense networks over shared log-Gammatone features — a fore-/background
classifier trained with a weighted loss and a joint class/boundary network
trained with a multitask loss — feed a monotone confidence-accumulation
inference step that can trigger on ongoing events before they end.
"""

__version__ = "0.1.0"
