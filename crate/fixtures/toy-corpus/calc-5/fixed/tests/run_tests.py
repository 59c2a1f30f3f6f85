import sys

sys.path.insert(0, ".")
import calc

failures = 0

got = calc.running_max([-3, -1])
if got != [-3, -1]:
    print("FAIL: tests/run_tests.py::test_running_max_negative")
    print("  at calc.running_max (calc.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<[-3, -1]> but was:<%s>" % (got,))
    failures += 1

got = calc.running_max([2, 1, 5])
if got != [2, 2, 5]:
    print("FAIL: tests/run_tests.py::test_running_max_mixed")
    print("  at calc.running_max (calc.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<[2, 2, 5]> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
