"""Configuration file for sniffer."""

import subprocess
import time

from sniffer.api import file_validator, runnable, select_runnable

try:
    from pync import Notifier
except ImportError:
    notify = None
else:
    notify = Notifier.notify


watch_paths = ["playgrader", "tests"]


class Options:
    group = int(time.time())  # unique per run
    rerun_args = None

    targets = [
        (('poetry', 'run', 'pytest', '--no-cov', '-x'), "Unit Tests", True),
        (('poetry', 'run', 'pylint', 'playgrader'), "Static Analysis", True),
        (('poetry', 'run', 'mkdocs', 'build', '--clean', '--strict'), None, True),
    ]


@select_runnable('run_targets')
@file_validator
def python_files(filename):
    return filename.endswith('.py') and '.py.' not in filename


@runnable
def run_targets(*args):
    """Run the test, lint and docs targets in order, stopping at the first failure."""
    count = 0
    for count, (command, title, retry) in enumerate(Options.targets, start=1):
        if not call(command, retry):
            show_notification("✅ " * (count - 1) + "❌", title)
            return False

    show_notification("✅ " * count, "All Targets")
    return True


def call(command, retry):
    if Options.rerun_args:
        previous, Options.rerun_args = Options.rerun_args, None
        if not call(*previous):
            return False

    print("")
    print("$ %s" % ' '.join(command))
    failure = subprocess.call(command)

    if failure and retry:
        Options.rerun_args = command, retry

    return not failure


def show_notification(message, title):
    if notify and title:
        notify(message, title=title, group=Options.group)
