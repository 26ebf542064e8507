"""Python bindings for the PLANET multimodal graph pre-training library."""

from ._planet import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    Graph,
    Model,
    NumericalError,
    fewshot,
    gen_sbm,
    gen_synergy,
    gradcheck,
    node_probe,
    pretrain,
    run_cli,
    solve_transport,
    wasserstein1,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "Error",
    "FormatError",
    "Graph",
    "Model",
    "NumericalError",
    "fewshot",
    "gen_sbm",
    "gen_synergy",
    "gradcheck",
    "node_probe",
    "pretrain",
    "run_cli",
    "solve_transport",
    "wasserstein1",
]
