"""Blind co-channel interference cancellation for QAM-OFDM with a convolutional LSTM autoencoder."""

__version__ = "0.1.0"
