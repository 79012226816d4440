"""
Module to test that the sources keep the black line length.
"""

import glob
import os
import unittest

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
# [tool.black] line-length in pyproject.toml
LINE_LENGTH = 88
SOURCES = ("fabrics/*.py", "tests/*.py", "doc/*.py", "config.py", "run.py")


class LineLengthTest(unittest.TestCase):
    """
    Test suite for source formatting.
    """

    def test_lines_fit(self):
        """
        Test that no source line is longer than the configured line length.
        """
        paths = sorted(
            path
            for pattern in SOURCES
            for path in glob.glob(os.path.join(ROOT_DIR, pattern))
        )
        self.assertTrue(paths)
        for path in paths:
            with open(path, "r", encoding="utf-8") as handle:
                for number, line in enumerate(handle, start=1):
                    with self.subTest(file=os.path.relpath(path, ROOT_DIR)):
                        self.assertLessEqual(
                            len(line.rstrip("\n")), LINE_LENGTH, f"line {number}"
                        )


if __name__ == "__main__":
    unittest.main()
