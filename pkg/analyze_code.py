"""
Static checks for the coreopt modules.
Flags error handling that hides failures and randomness that bypasses the
seeded generators.
"""

import os
import re

MODULES = [
    "evaluation.py",
    "problem.py",
    "surrogate.py",
    "psa.py",
    "tabu.py",
    "es.py",
    "pesa.py",
    "ppo.py",
    "stats.py",
    "harness.py",
    "coreopt.py",
    "report_app.py",
]

# legacy global-state numpy calls; Generator methods are fine
GLOBAL_NUMPY_RNG = re.compile(
    r"\bnp\.random\.(seed|rand|randn|randint|random|choice|shuffle|permutation|normal|uniform)\s*\("
)


def analyze_code(filepath):
    """Analyze a Python file for potential issues."""
    issues = []

    with open(filepath, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")

    def flag(i, severity, kind, message, code=None):
        issues.append({
            "file": filepath,
            "line": i,
            "severity": severity,
            "type": kind,
            "message": message,
            "code": code if code is not None else lines[i - 1].strip(),
        })

    # 1. Bare except clauses
    for i, line in enumerate(lines, 1):
        if re.search(r"except\s*:", line):
            flag(i, "MEDIUM", "Bare except clause",
                 "Using bare except: can hide bugs. Catch CoreOptError or a specific exception.")

    # 2. Pass in except blocks
    in_except = False
    except_line = 0
    for i, line in enumerate(lines, 1):
        if re.match(r"\s*except\b.*:\s*$", line):
            in_except = True
            except_line = i
        elif in_except and line.strip() == "pass":
            flag(i, "LOW", "Silent error handling",
                 "Exception is silently ignored with pass. Log it or re-raise.",
                 f"Line {except_line}: {lines[except_line - 1].strip()} ... pass")
            in_except = False
        elif in_except and line.strip() and not line.strip().startswith("#"):
            in_except = False

    # 3. Unseeded randomness
    for i, line in enumerate(lines, 1):
        if GLOBAL_NUMPY_RNG.search(line):
            flag(i, "HIGH", "Global numpy RNG",
                 "Draw from a Generator passed in (see evaluation.spawn_streams), not the global state.")
        if re.match(r"\s*(import random\b|from random import)", line):
            flag(i, "HIGH", "stdlib random",
                 "The random module is not tied to the run seed. Use numpy Generators.")

    # 4. Mutable default arguments
    for i, line in enumerate(lines, 1):
        if re.search(r"def \w+\(.*=\s*(\[\]|\{\}|set\(\))", line):
            flag(i, "MEDIUM", "Mutable default argument",
                 "Default values are shared between calls. Use None or a tuple.")

    # 5. Bare print in library code
    for i, line in enumerate(lines, 1):
        if re.match(r"\s*print\(", line):
            flag(i, "LOW", "print call",
                 "Use the module logger or a rich Console.")

    # 6. Shell execution
    for i, line in enumerate(lines, 1):
        if "subprocess" in line and "shell=True" in line:
            flag(i, "HIGH", "Security: shell injection risk",
                 "Using shell=True in subprocess can lead to shell injection vulnerabilities.")
        if re.search(r"\bos\.system\s*\(", line):
            flag(i, "HIGH", "Security: os.system usage",
                 "os.system is deprecated and insecure. Use subprocess instead.")

    return issues


def main():
    """Analyze every project module."""
    print("=" * 60)
    print("Static Code Analysis - coreopt")
    print("=" * 60)

    all_issues = []

    for filepath in MODULES:
        if os.path.exists(filepath):
            print(f"\nAnalyzing {filepath}...")
            issues = analyze_code(filepath)
            all_issues.extend(issues)
            print(f"  Found {len(issues)} potential issues")

    severity_order = {"HIGH": 0, "MEDIUM": 1, "LOW": 2}
    all_issues.sort(key=lambda x: severity_order[x["severity"]])

    print("\n" + "=" * 60)
    print("ANALYSIS RESULTS")
    print("=" * 60)

    if not all_issues:
        print("\n✓ No issues found!")
        return 0

    for severity, marker in (("HIGH", "🔴"), ("MEDIUM", "🟡"), ("LOW", "🟢")):
        group = [i for i in all_issues if i["severity"] == severity]
        if not group:
            continue
        print(f"\n{marker} {severity} SEVERITY ({len(group)} issues):")
        for issue in group:
            print(f"\n  {issue['type']}")
            print(f"  Location: {issue['file']}:{issue['line']}")
            print(f"  Message: {issue['message']}")
            print(f"  Code: {issue['code']}")

    high = sum(1 for i in all_issues if i["severity"] == "HIGH")
    print("\n" + "=" * 60)
    print(f"Total issues: {len(all_issues)} (High: {high})")
    print("=" * 60)

    # Return non-zero only for high severity issues
    return 1 if high else 0


if __name__ == "__main__":
    import sys
    sys.exit(main())
