"""scikit-learn style wrappers around feature extraction and the networks."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .dsp import TARGET_RATE_HZ, Waveform, load_waveform, resample, stft_magnitude
from .models import ModelConfig, build_model, predict_many
from .rng import make_rng
from .training import Dataset, TrainingConfig, predict_similarity, train, train_similarity
from .validation import check_pairs, check_spectrograms, check_targets


class SpectrogramExtractor(TransformerMixin, BaseEstimator):
    """Waveforms (or WAV paths) to 257-bin magnitude spectrograms.

    Bare arrays are taken to be sampled at ``target_rate_hz`` already.
    """

    def __init__(self, target_rate_hz=TARGET_RATE_HZ):
        self.target_rate_hz = target_rate_hz

    def fit(self, X, y=None):
        return self

    def _waveform(self, item):
        if isinstance(item, Waveform):
            return resample(item, self.target_rate_hz)
        if isinstance(item, (str, bytes)) or hasattr(item, "__fspath__"):
            return load_waveform(item, self.target_rate_hz)
        return Waveform(np.asarray(item, dtype=np.float64), self.target_rate_hz)

    def transform(self, X):
        return [stft_magnitude(self._waveform(item)).frames for item in X]


class _NetworkEstimator(BaseEstimator):
    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def _training_config(self):
        return TrainingConfig(alpha=getattr(self, "alpha", 0.0), batch_size=self.batch_size,
                              learning_rate=self.learning_rate,
                              patience_epochs=self.patience_epochs, max_epochs=self.max_epochs,
                              seed=self.random_state, mask_padding=getattr(self, "mask_padding", True))

    def save(self, path):
        self._check_fitted()
        save_checkpoint(self.model_, path)


class MOSNetRegressor(RegressorMixin, _NetworkEstimator):
    """Utterance MOS regressor with frame-wise scoring.

    ``X`` is a sequence of ``(frames, bins)`` spectrograms of any length and
    ``y`` the utterance-level MOS. Without an explicit validation set a
    ``validation_fraction`` of the training data drives early stopping.

    Attributes
    ----------
    model_ : MOSNet
        Network holding the best-validation weights.
    history_ : TrainingHistory
    n_bins_in_ : int
    """

    def __init__(self, architecture="cnn-blstm", channels=(16, 32, 64, 128), blstm_hidden=128,
                 fc_hidden=None, dropout_rate=0.3, scale=1.0, alpha=1.0, batch_size=64,
                 learning_rate=1e-4, patience_epochs=5, max_epochs=100, mask_padding=True,
                 validation_fraction=0.15, random_state=0):
        self.architecture = architecture
        self.channels = channels
        self.blstm_hidden = blstm_hidden
        self.fc_hidden = fc_hidden
        self.dropout_rate = dropout_rate
        self.scale = scale
        self.alpha = alpha
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience_epochs = patience_epochs
        self.max_epochs = max_epochs
        self.mask_padding = mask_padding
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _model_config(self, n_bins):
        return ModelConfig(self.architecture, tuple(self.channels), self.blstm_hidden,
                           self.fc_hidden, self.dropout_rate, self.scale, n_bins)

    def fit(self, X, y, X_val=None, y_val=None, callback=None):
        specs = check_spectrograms(X)
        y = check_targets(y, len(specs))
        n_bins = specs[0].shape[1]
        train_set = Dataset(specs, y)
        if X_val is not None:
            val_specs = check_spectrograms(X_val, n_bins)
            val_set = Dataset(val_specs, check_targets(y_val, len(val_specs)))
        elif self.validation_fraction and len(specs) > 1:
            n_val = max(1, int(round(self.validation_fraction * len(specs))))
            order = make_rng(self.random_state, "validation-split").permutation(len(specs))
            val_set = train_set.subset(np.sort(order[:n_val]))
            train_set = train_set.subset(np.sort(order[n_val:]))
        else:
            val_set = train_set
        self.model_ = build_model(self._model_config(n_bins), seed=self.random_state)
        self.model_, self.history_ = train(self.model_, train_set, val_set,
                                           self._training_config(), callback)
        self.n_bins_in_ = n_bins
        return self

    def predict_frames(self, X):
        """Frame-score sequences, one per input spectrogram."""
        self._check_fitted()
        specs = check_spectrograms(X, self.n_bins_in_)
        return [p.frame_scores for p in predict_many(self.model_, specs)]

    def predict(self, X):
        self._check_fitted()
        specs = check_spectrograms(X, self.n_bins_in_)
        return np.array([p.utterance_score for p in predict_many(self.model_, specs)])

    @classmethod
    def from_checkpoint(cls, path, **params):
        model = load_checkpoint(path)
        cfg = model.config
        est = cls(architecture=cfg.architecture, channels=cfg.channels,
                  blstm_hidden=cfg.blstm_hidden, fc_hidden=cfg.fc_hidden,
                  dropout_rate=cfg.dropout_rate, scale=cfg.scale, **params)
        est.model_ = model
        est.n_bins_in_ = cfg.n_bins
        return est


class SimilarityClassifier(ClassifierMixin, _NetworkEstimator):
    """Same/different-speaker classifier over spectrogram pairs.

    ``head='scalar'`` uses a logistic output trained by squared error against
    the 0/1 label; ``head='2class'`` a softmax trained by cross-entropy.
    ``X`` is a sequence of ``(spec_a, spec_b)`` pairs.
    """

    def __init__(self, head="scalar", channels=(16, 32, 64, 128), fc_hidden=None,
                 dropout_rate=0.3, scale=1.0, batch_size=16, learning_rate=1e-4,
                 patience_epochs=5, max_epochs=50, validation_fraction=0.0, random_state=0):
        self.head = head
        self.channels = channels
        self.fc_hidden = fc_hidden
        self.dropout_rate = dropout_rate
        self.scale = scale
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience_epochs = patience_epochs
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _model_config(self, n_bins):
        if self.head not in ("scalar", "2class"):
            raise ValueError(f"head must be 'scalar' or '2class', got {self.head!r}")
        return ModelConfig(f"similarity-{self.head}", tuple(self.channels),
                           fc_hidden=self.fc_hidden, dropout_rate=self.dropout_rate,
                           scale=self.scale, n_bins=n_bins)

    def fit(self, X, y, callback=None):
        a, b = check_pairs(X)
        y = check_targets(y, len(a), 0, 1).astype(np.int64)
        self.classes_ = np.array([0, 1])
        n_bins = a[0].shape[1]
        val = None
        if self.validation_fraction:
            n_val = max(1, int(round(self.validation_fraction * len(a))))
            order = make_rng(self.random_state, "validation-split").permutation(len(a))
            vi, ti = np.sort(order[:n_val]), np.sort(order[n_val:])
            val = ([a[k] for k in vi], [b[k] for k in vi], y[vi])
            a, b, y = [a[k] for k in ti], [b[k] for k in ti], y[ti]
        self.model_ = build_model(self._model_config(n_bins), seed=self.random_state)
        self.model_, self.history_ = train_similarity(self.model_, a, b, y,
                                                      self._training_config(), val, callback)
        self.n_bins_in_ = n_bins
        return self

    def predict_score(self, X):
        """Probability of 'same speaker' for each pair."""
        self._check_fitted()
        a, b = check_pairs(X, self.n_bins_in_)
        return predict_similarity(self.model_, a, b)

    def predict_proba(self, X):
        p = self.predict_score(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(np.int64)

    @classmethod
    def from_checkpoint(cls, path, **params):
        model = load_checkpoint(path)
        cfg = model.config
        head = "scalar" if cfg.architecture == "similarity-scalar" else "2class"
        est = cls(head=head, channels=cfg.channels, fc_hidden=cfg.fc_hidden,
                  dropout_rate=cfg.dropout_rate, scale=cfg.scale, **params)
        est.model_ = model
        est.classes_ = np.array([0, 1])
        est.n_bins_in_ = cfg.n_bins
        return est
