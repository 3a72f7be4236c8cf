"""EE versus the number of RIS elements."""
from _common import parser, sweep

from moveris.config import ALL_SCHEMES

if __name__ == "__main__":
    p = parser(__doc__, "ris_size")
    p.add_argument("--values", type=int, nargs="+", default=[16, 25, 36, 49])
    args = p.parse_args()
    sweep(args, "N", args.values, ALL_SCHEMES, "sweep_N")
