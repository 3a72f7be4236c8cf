"""EE versus the number of users."""
from _common import parser, sweep

from moveris.config import ALL_SCHEMES

if __name__ == "__main__":
    p = parser(__doc__, "users")
    p.add_argument("--values", type=int, nargs="+", default=[2, 3, 4])
    args = p.parse_args()
    sweep(args, "K", args.values, ALL_SCHEMES, "sweep_K")
