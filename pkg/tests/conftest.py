CRITERIA = {
    1: "trivial limits",
    2: "density normalisation and LOS coverage",
    3: "Laplace transforms against simulation",
    4: "outage against simulation",
    5: "mode selection against simulation",
    6: "figure trend suite",
    7: "determinism across worker counts",
}


def pytest_configure(config):
    config.acceptance = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number not in results:
            continue
        ok, lines = results[number]
        terminalreporter.write_line(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}")
        for line in lines:
            terminalreporter.write_line(f"    {line}")
