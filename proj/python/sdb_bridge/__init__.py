from ._core import (
    ConfigError,
    ContractViolation,
    Error,
    LinearSystem,
    ParameterError,
    Schedule,
    dense_system,
    gaussian_posterior,
    pseudoinverse,
    psnr,
    run_cli,
    sample_oracle,
    ssim,
    suite_names,
    task_system,
    verify,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "Error",
    "LinearSystem",
    "ParameterError",
    "Schedule",
    "dense_system",
    "gaussian_posterior",
    "pseudoinverse",
    "psnr",
    "run_cli",
    "sample_oracle",
    "ssim",
    "suite_names",
    "task_system",
    "verify",
]
