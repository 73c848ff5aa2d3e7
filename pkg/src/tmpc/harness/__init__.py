from .bench import BenchReport, run_bench
from .examples import RunConfig, run_example

__all__ = ["BenchReport", "RunConfig", "run_bench", "run_example"]
