"""Bell-test simulator: amplitude-averaging and local hidden-variable models,
CHSH statistics, Monte Carlo coincidence runs and event-file ingestion."""

__version__ = "0.1.0"
