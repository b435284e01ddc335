"""
stepfold.autograde
==================

Runs invariant checks, records whether each one passed and prints a
summary of the results.

"""

import logging

logger = logging.getLogger(__name__)


def run_test(
    func,
    *args,
    description=None,
    correct_message="invariant holds",
    error_message="invariant violated",
    **kwargs
):
    """Runs one check and records its outcome.

    Parameters
    ----------
    func : function or method
        Check to run; it signals failure by raising.
    *args
        Positional arguments passed to `func`.
    description : str, optional
        Name reported for the check; defaults to the function name.
    correct_message : str
        Message recorded when the check passes.
    error_message : str
        Message recorded when the check fails.
    **kwargs
        Keyword arguments passed to `func`.

    Returns
    -------
    results : dict with the following keys:
        pass : bool : passing status of the check
        description : str : name of the check
        message : str : `correct_message` or `error_message`
        traceback : Exception : the exception raised by a failing check,
        None when it passed
    """
    results = {
        "pass": False,
        "description": description or func.__name__,
        "traceback": None,
    }
    try:
        func(*args, **kwargs)
    except Exception as e:
        logger.debug("check %s failed: %s", results["description"], e)
        results["message"] = error_message
        results["traceback"] = e
    else:
        results["pass"] = True
        results["message"] = correct_message
    return results


def run_checks(tester):
    """Runs every check of a ``BundleTester`` in its reporting order."""
    return [
        run_test(method, description=description)
        for method, description in tester.checks()
    ]


def output_results(results):
    """Prints one block per check and returns the number of failures.

    Parameters
    ----------
    results : list of dict
        As returned by ``run_test``.

    Returns
    -------
    failures : int
    """
    failures = 0
    for r in results:
        print("Results for test '{}':".format(r["description"]))
        if r["pass"]:
            print(" Pass! {msg}".format(msg=r["message"]))
        else:
            failures += 1
            print(" Fail! {msg}".format(msg=r["message"]))
            print(" Traceback: {t}".format(t=r["traceback"]))
    passed = len(results) - failures
    print("{0} of {1} checks passed".format(passed, len(results)))
    return failures
