"""EE per AO iteration for MA-ME at several RIS sizes."""
from _common import parser, template

from moveris import bench


def main():
    p = parser(__doc__, "convergence")
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 36, 49])
    args = p.parse_args()
    cfg, trials = template(args)
    table = bench.run_convergence(cfg, args.sizes, trials, args.seed, args.workers)
    path = bench.emit_plot_data(table, "convergence", args.out)
    bench.write_manifest(args.out, cfg, args.seed, sizes=args.sizes, trials=trials)
    for rec in table.sorted_records():
        print(f"N={rec.sweep_value:g} trial={rec.trial} iterations={rec.iterations} EE={rec.ee:.4f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
