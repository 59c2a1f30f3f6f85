import sys

sys.path.insert(0, ".")
import textkit

failures = 0

got = textkit.slugify("Hello World")
if got != 'hello-world':
    print("FAIL: tests/run_tests.py::test_mixed_case")
    print("  at textkit.slugify (textkit.py:2)")
    print("  at tests/run_tests.py:8")
    print("  expected:<hello-world> but was:<%s>" % (got,))
    failures += 1

got = textkit.slugify("v2 Release")
if got != 'v2-release':
    print("FAIL: tests/run_tests.py::test_digit_kept")
    print("  at textkit.slugify (textkit.py:2)")
    print("  at tests/run_tests.py:16")
    print("  expected:<v2-release> but was:<%s>" % (got,))
    failures += 1


if failures:
    sys.exit(1)
print("OK")
