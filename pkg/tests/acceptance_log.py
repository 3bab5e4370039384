"""Collects one verdict line per acceptance criterion for the terminal summary."""
LINES = []


def report(criterion, ok, detail):
    line = f"[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
    LINES.append(line)
    print(line)
    return ok


def note(text):
    """Indented detail under the preceding verdict line."""
    LINES.append("    " + text)
    print("    " + text)
