"""Compare typeset reduced equations with the chain-rule pushforward of the HJB."""

from illiquid_hjb.reductions import CASE_IDS, get_case, verify_reduction

for cross in ("printed", "hjb"):
    print(f"original equation with cross term '{cross}'")
    for cid in CASE_IDS:
        rep = verify_reduction(get_case(cid, cross_term=cross), n=200, rng=0)
        flags = ",".join(rep.flags) or "-"
        print(f"  {cid:18s} defect {rep.max_defect:8.1e}  gauge {rep.gauge_defect:8.1e}  flags {flags}")
