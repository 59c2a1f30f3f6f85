import sys

sys.path.insert(0, ".")
import textkit

failures = 0

got = textkit.normalize_spaces("a   b")
if got != 'a b':
    print("FAIL: tests/run_tests.py::test_collapse_runs")
    print("  at textkit.normalize_spaces (textkit.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<a b> but was:<%s>" % (got,))
    failures += 1

got = textkit.normalize_spaces(" x y ")
if got != 'x y':
    print("FAIL: tests/run_tests.py::test_strip_ends")
    print("  at textkit.normalize_spaces (textkit.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<x y> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
