"""Pytest wiring for absltest-based test modules.

absltest.main() normally parses absl flags (e.g. --test_tmpdir); under pytest
it is never called, so parse them here with their default values.
"""

import sys

from absl import flags


def pytest_configure(config):
  del config
  if not flags.FLAGS.is_parsed():
    flags.FLAGS(sys.argv[:1], known_only=True)
