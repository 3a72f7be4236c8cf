"""EE versus the number of BS antennas."""
from _common import parser, sweep

from moveris.config import ALL_SCHEMES

if __name__ == "__main__":
    p = parser(__doc__, "antennas")
    p.add_argument("--values", type=int, nargs="+", default=[4, 6, 8])
    args = p.parse_args()
    sweep(args, "M", args.values, ALL_SCHEMES, "sweep_M")
