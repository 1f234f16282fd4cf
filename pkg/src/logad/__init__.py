"""Two-stage log anomaly detection.

Stage one trains a feed-forward autoencoder per class on frequency-encoded
log messages and uses its reconstructions as extracted features.  Stage two
classifies those features with an LSTM, BLSTM or GRU network trained by
hand-written backpropagation through time.  The :mod:`logad.cli` module
drives the whole pipeline from a JSON config.
"""

__version__ = "0.1.0"
