# Defines the exception hierarchy and the abstract interface for seed scheduling policies
from abc import ABC, abstractmethod
from typing import List, Sequence, Tuple

import numpy as np


class SchedulerError(Exception):
    """Base exception for seed scheduler errors."""
    pass


class ProgramModelError(SchedulerError, ValueError):
    """Exception raised for invalid program models, generator parameters or branch ids."""
    pass


class LineageError(SchedulerError, ValueError):
    """Exception raised for inconsistent seed lineage (unknown parent, duplicate id, unknown root)."""
    pass


class ModelError(SchedulerError, ValueError):
    """Exception raised for invalid learning-model parameters or inputs."""
    pass


class ModelFileError(SchedulerError):
    """Exception raised when a model file cannot be read back."""
    pass


class ModelVersionError(ModelFileError):
    """Exception raised when a model file carries an unsupported version tag."""
    pass


class ModelChecksumError(ModelFileError):
    """Exception raised when a model file is truncated or its checksum does not match."""
    pass


class ConfigError(SchedulerError, ValueError):
    """Exception raised for invalid campaign, experiment or command-line configuration."""
    pass


class ExperimentError(SchedulerError):
    """Exception raised when an experiment cannot be carried out (e.g. missing model files)."""
    pass


class StatisticsError(SchedulerError, ValueError):
    """Exception raised when a statistical test receives unusable samples."""
    pass


class SeedSchedulingPolicy(ABC):
    """
    Abstract base class defining the interface for seed scheduling policies.
    Implementations decide which seeds in the fuzzer's queue are transferred
    to the concolic executor first (random draws, AFL-style heuristics or
    learned utility models).
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Command-line name of the policy (e.g. 'random', 'ml-ol')."""
        pass

    @property
    @abstractmethod
    def needs_features(self) -> bool:
        """Whether score() consumes the feature matrix of the whole queue."""
        pass

    @property
    def learns(self) -> bool:
        """Whether learn() updates a model; non-learning policies ignore feedback."""
        return False

    @abstractmethod
    def score(self, seeds: Sequence, features: np.ndarray) -> np.ndarray:
        """
        Scores every seed of a queue snapshot; higher means dispatch earlier.

        Args:
            seeds: The queue snapshot, ordered by SeedId.
            features: Raw feature matrix of shape (len(seeds), 10) in
                      FEATURE_NAMES order, or an empty array when
                      needs_features is False.

        Returns:
            A float array of len(seeds) scores. Must be a pure function of the
            policy state and its arguments: calling it twice without an
            intervening on_dispatch()/learn() yields the same scores.
        """
        pass

    @abstractmethod
    def on_dispatch(self) -> None:
        """Notifies the policy that a dispatch round consumed its current scores."""
        pass

    @abstractmethod
    def learn(self, matured: List[Tuple[np.ndarray, float]]) -> None:
        """
        Feeds matured (raw features, label) pairs back into the policy.

        Args:
            matured: Training pairs in selection order.

        Raises:
            ModelError: If a pair carries non-finite values.
        """
        pass
