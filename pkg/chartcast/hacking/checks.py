#    Licensed under the Apache License, Version 2.0 (the "License"); you may
#    not use this file except in compliance with the License. You may obtain
#    a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#    WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#    License for the specific language governing permissions and limitations
#    under the License.

"""
Guidelines for writing new hacking checks

 - Use only for chartcast specific checks. General checks belong in the
   common 'hacking' module.
 - Pick numbers in the range C3xx. Find the current check with the highest
   allocated number and then pick the next value.
 - Keep the check functions in this file ordered by their C3xx value.
 - List the new rule in the top level HACKING.rst file.
 - Add test cases for each new rule to
   chartcast/tests/unit/hacking/test_checks.py

"""

import re

from hacking import core


tests_imports_dot = re.compile(r"\bimport[\s]+chartcast.tests\b")
tests_imports_from1 = re.compile(r"\bfrom[\s]+chartcast.tests\b")
tests_imports_from2 = re.compile(
    r"\bfrom[\s]+chartcast[\s]+import[\s]+tests\b")

import_mock = re.compile(r"\bimport[\s]+mock\b")  # noqa: H216
import_from_mock = re.compile(r"\bfrom[\s]+mock[\s]+import\b")

print_call = re.compile(r"(^|[^\w.])print\(")
global_numpy_seed = re.compile(r"\b(np|numpy)\.random\.seed\(")

TESTS_PATH = 'chartcast/tests/'
CMD_PATH = 'chartcast/cmd/'


@core.flake8ext
def check_assertisinstance(logical_line, filename):
    """C331 - Enforce using assertIsInstance."""

    if TESTS_PATH in filename:
        if re.search(r"assertTrue\(\s*isinstance\(\s*[^,]*,\s*[^,]*\)\)",
                     logical_line):
            msg = ("C331: Use assertIsInstance(observed, type) instead "
                   "of assertTrue(isinstance(observed, type))")
            yield (0, msg)


@core.flake8ext
def check_no_imports_from_tests(logical_line, filename):
    """C343 - Production code must not import from chartcast.tests.*"""

    msg = "C343 Production code must not import from chartcast.tests.*"

    if TESTS_PATH in filename:
        return

    for regex in tests_imports_dot, tests_imports_from1, tests_imports_from2:
        if re.match(regex, logical_line):
            yield (0, msg)


@core.flake8ext
def check_no_import_mock(logical_line, filename, noqa):
    """C347 - Test code must not import mock library."""
    msg = "C347: Test code must not import mock library"

    if noqa:
        return

    if TESTS_PATH not in filename:
        return

    for regex in import_mock, import_from_mock:
        if re.match(regex, logical_line):
            yield (0, msg)


@core.flake8ext
def check_no_print(logical_line, filename, noqa):
    """C350 - Library code logs through oslo.log instead of print()."""

    if noqa or TESTS_PATH in filename or CMD_PATH in filename:
        return
    if print_call.search(logical_line):
        yield (0, "C350: Use LOG instead of print() in library code")


@core.flake8ext
def check_no_global_numpy_seed(logical_line, noqa):
    """C351 - Seed a local numpy Generator, never the global state."""

    if noqa:
        return
    match = global_numpy_seed.search(logical_line)
    if match:
        yield (match.start(),
               "C351: Use np.random.default_rng(seed) instead of "
               "np.random.seed()")
