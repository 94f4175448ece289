#!/usr/bin/env python3
"""Solve an LP/MILP file with HiGHS and write a JSON solution file.

usage: highs_solve.py MODEL.lp SOLUTION.json TIME_LIMIT_S [--integer-focus]
                      [--start START.json]

START.json maps column names to an initial assignment.

The solution file has the form
    {"status": "optimal|feasible|infeasible|timeout|error",
     "objective": <float or null>,
     "values": {"<column name>": <float>, ...}}

Tolerances are tightened well below the library defaults so that objective
values can be compared against exhaustive enumeration at 1e-6.
"""

import json
import sys

import highspy


def main(argv):
    if len(argv) < 4:
        print(__doc__, file=sys.stderr)
        return 64
    lp_path, sol_path, limit = argv[1], argv[2], float(argv[3])
    rest = argv[4:]
    focus = "--integer-focus" in rest
    start = None
    if "--start" in rest:
        i = rest.index("--start")
        if i + 1 >= len(rest):
            print("--start needs a file", file=sys.stderr)
            return 64
        with open(rest[i + 1]) as f:
            start = json.load(f)

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    if h.readModel(lp_path) != highspy.HighsStatus.kOk:
        print(f"failed to read {lp_path}", file=sys.stderr)
        return 65
    h.setOptionValue("time_limit", limit)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1e-9)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    h.setOptionValue("threads", 1)
    if focus:
        h.setOptionValue("mip_heuristic_effort", 0.3)

    if start is not None:
        names = h.getLp().col_names_
        sol = highspy.HighsSolution()
        sol.col_value = [float(start.get(n, 0.0)) for n in names]
        sol.value_valid = True
        h.setSolution(sol)

    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    has_sol = info.primal_solution_status == 2  # kSolutionStatusFeasible

    M = highspy.HighsModelStatus
    if ms == M.kOptimal:
        status = "optimal"
    elif ms in (M.kInfeasible, M.kUnboundedOrInfeasible):
        status = "infeasible"
    elif ms in (M.kTimeLimit, M.kIterationLimit, M.kInterrupt, M.kSolutionLimit):
        status = "feasible" if has_sol else "timeout"
    else:
        status = "feasible" if has_sol else "error"

    out = {"status": status, "objective": None, "values": {}}
    if status in ("optimal", "feasible"):
        lp = h.getLp()
        vals = h.getSolution().col_value
        out["objective"] = info.objective_function_value
        out["values"] = {n: v for n, v in zip(lp.col_names_, vals)}
    with open(sol_path, "w") as f:
        json.dump(out, f)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
