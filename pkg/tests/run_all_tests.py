"""
Main test runner for pynlps.
This file allows running all tests at once or specific test categories.
"""
import argparse
import os
import sys

import pytest

# Add the project root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

CATEGORIES = ['core', 'systems', 'utils', 'numerics', 'all']


def run_tests(category=None):
    """
    Run tests based on the specified category.

    Args:
        category (str, optional): Test category to run. Options: 'core', 'systems', 'utils',
            'numerics' (the top-level module tests), 'all'. If None, runs all tests.
    """
    here = os.path.dirname(__file__)
    if category in ('core', 'systems', 'utils'):
        test_path = os.path.join(here, category)
        return pytest.main(["-xvs", test_path])
    if category == 'numerics':
        return pytest.main(["-xvs"] + sorted(os.path.join(here, f) for f in os.listdir(here)
                                              if f.startswith('test_') and f.endswith('.py')))
    return pytest.main(["-xvs", here])


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description='Run pynlps tests')
    parser.add_argument('--category', choices=CATEGORIES, default='all', help='Test category to run')

    args = parser.parse_args()
    exit_code = run_tests(args.category if args.category != 'all' else None)
    sys.exit(exit_code)
