"""Paired comparison of the four mobility schemes at one operating point."""
from _common import parser, sweep

from moveris import bench
from moveris.config import ALL_SCHEMES

if __name__ == "__main__":
    args = parser(__doc__, "schemes").parse_args()
    table = sweep(args, None, None, ALL_SCHEMES, "schemes")
    base = table.mean_ee("FA-FE")
    for name in ALL_SCHEMES:
        print(f"{name}: mean EE {table.mean_ee(name):.3f} ({table.mean_ee(name) / base - 1:+.1%} vs FA-FE)")
    print(f"MA-ME >= FA-FE in {bench.paired_fraction(table, 'MA-ME', 'FA-FE'):.0%} of paired trials")
