"""EE versus the per-user power budget for all four schemes (R_th = 0.5)."""
from _common import parser, sweep

from moveris.config import ALL_SCHEMES

if __name__ == "__main__":
    args = parser(__doc__, "pmax").parse_args()
    sweep(args, "pmax_dbm", [0, 4, 8, 12, 16, 20], ALL_SCHEMES, "sweep_pmax",
          rate_threshold_bpshz=0.5)
