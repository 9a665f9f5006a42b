# =====================================================
# SRC PACKAGE
# =====================================================
#
# This file makes 'src' a Python package, so the CLI, the
# API and the tests can all do:
#   from src.tracker import Tracker
#
# Bottom-up, the modules are:
#   spectral -> features -> solver -> tracker -> evaluation
# with sequences, run_config, oracles, selftest and benchmark
# alongside.
# =====================================================
