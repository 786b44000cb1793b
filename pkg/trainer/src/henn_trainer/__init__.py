"""Training side of the encrypted-inference pipeline.

Trains the canonical CNN with a polynomial activation on plaintext data and
exports weights through the documented model-file format; the inference
engine is a separate package and is only ever reached through those files.
"""

__version__ = "0.1.0"
