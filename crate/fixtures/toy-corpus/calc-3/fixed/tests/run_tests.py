import sys

sys.path.insert(0, ".")
import calc

failures = 0

got = calc.mean([2, 4, 6])
if got != 4.0:
    print("FAIL: tests/run_tests.py::test_mean_of_three")
    print("  at calc.mean (calc.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<4.0> but was:<%s>" % (got,))
    failures += 1

got = calc.mean([1, 3])
if got != 2.0:
    print("FAIL: tests/run_tests.py::test_mean_of_two")
    print("  at calc.mean (calc.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<2.0> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
