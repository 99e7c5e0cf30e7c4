"""Linear (Koopman) surrogate identification for systems with input delays.

Subpackages:

- sim: delayed two-tank simulator and excitation/noise synthesis
- dataset: trajectories, history/supervision windows, normalization, split
- edmd: dictionary-lifted least-squares baseline (with delayed-input embedding)
- nn: minimal dense NN core (MLP, LSTM, exact gradients, Adam)
- dko: LSTM-encoded deep Koopman model, losses and training loop
- evaluation: rollout MAE and eigenvalue comparison
- cli: reproducible simulate/train/evaluate pipeline
"""

__version__ = "0.1.0"
