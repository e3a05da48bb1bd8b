"""Command-line entry point: ``spandedup {dedup,stats,dimension,synth}``.

The log level can be set with ``SPANDEDUP_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dimensioning as dim
from .compare import ALL_TYPES, CompareStats, DuplicateType
from .pcapio import PcapWriter, capture_link_type, read_capture
from .report import InputSummary, build_report, comparison_dict, dumps
from .sim import (
    SWEEP_RATES,
    DuplicateProfile,
    config_from_dict,
    reference_testbed,
    simulate,
)
from .units import fmt_duration, parse_duration, parse_rate, parse_size
from .window import (
    DEFAULT_WINDOW,
    CountWindow,
    EmptyInput,
    TimeWindow,
    WindowConfig,
    WindowEngine,
    distance_stats,
)

log = logging.getLogger("spandedup")


class UsageError(Exception):
    pass


def _types(text: str) -> frozenset:
    if text.strip().lower() == "all":
        return ALL_TYPES
    return frozenset(DuplicateType.parse(part) for part in text.split(",") if part.strip())


def _add_window_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--window-time", metavar="DUR", help="time window, e.g. 15ms (default: WS from link flags, else 100ms)")
    g.add_argument("--window-packets", metavar="K", type=int, help="count window of K packets")
    p.add_argument("--queue-len", type=float, metavar="PKTS", help="largest output queue, for the default window")
    p.add_argument("--max-frame", metavar="BYTES", help="largest on-wire frame, for the default window")
    p.add_argument("--min-capacity", metavar="RATE", help="slowest link, e.g. 100Mbps, for the default window")
    p.add_argument("--types", default="all", metavar="CSV",
                   help="duplicate types to detect: switching,routing,nat,proxy (default all)")
    p.add_argument("--strict-ttl", action="store_true", help="require TTL to drop by exactly one for routing/nat")


def window_config(args) -> WindowConfig:
    if args.window_packets is not None:
        mode = CountWindow(args.window_packets)
    elif args.window_time is not None:
        mode = TimeWindow(parse_duration(args.window_time))
    else:
        link = (args.queue_len, args.max_frame, args.min_capacity)
        if all(v is not None for v in link):
            ws = dim.window_size(dim.DimensionInputs(
                args.queue_len, parse_size(args.max_frame) * 8, parse_rate(args.min_capacity)))
            mode = TimeWindow(ws)
        elif any(v is not None for v in link):
            raise UsageError("--queue-len, --max-frame and --min-capacity must be given together")
        else:
            mode = TimeWindow(DEFAULT_WINDOW)
    return WindowConfig(mode, _types(args.types), args.strict_ttl)


def _write_report(report: dict, path):
    text = dumps(report)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_dedup(args) -> int:
    cfg = window_config(args)
    if args.mode == "remove" and not args.output:
        raise UsageError("--mode remove needs -o/--output")
    if args.mode == "report" and args.output:
        raise UsageError("--mode report writes no capture; drop -o or use --report")
    link_type = capture_link_type(args.input)
    summary = InputSummary(args.input)
    stats = CompareStats()
    engine = WindowEngine(cfg, link_type, stats)
    verdicts = []
    output = {"mode": args.mode, "keep": args.keep, "path": args.output, "packets_written": 0}

    packets = summary.track(read_capture(args.input))
    if args.mode == "remove" and args.keep == "originals":
        with open(args.output, "wb") as fh:
            writer = PcapWriter(fh, link_type)
            for pkt, verdict in engine.run(packets):
                if verdict is None:
                    writer.write(pkt)
                else:
                    verdicts.append(verdict)
            output["packets_written"] = writer.count
    else:
        annotate = None
        if args.mode == "annotate":
            output["path"] = args.output or f"{args.input}.verdicts.jsonl"
            annotate = open(output["path"], "w")
        try:
            for _, verdict in engine.run(packets):
                if verdict is not None:
                    verdicts.append(verdict)
                    if annotate:
                        annotate.write(json.dumps(verdict.to_record()) + "\n")
        finally:
            if annotate:
                annotate.close()
        if args.mode == "remove":
            # --keep none: second pass drops originals as well as copies
            drop = {v.packet_index for v in verdicts} | {v.original_index for v in verdicts}
            with open(args.output, "wb") as fh:
                writer = PcapWriter(fh, link_type)
                for i, pkt in enumerate(read_capture(args.input)):
                    if i not in drop:
                        writer.write(pkt)
                output["packets_written"] = writer.count
        elif args.mode == "annotate":
            output["packets_written"] = 0
        else:
            output = {"mode": "report", "keep": args.keep, "path": None, "packets_written": 0}

    config = {"input_link_type": link_type, **cfg.describe()}
    report = build_report(summary, verdicts, stats, config, output, args.time_bin)
    _write_report(report, args.report)
    log.info("%d packets, %d duplicates", summary.packets, len(verdicts))
    return 0


def cmd_stats(args) -> int:
    cfg = window_config(args)
    link_type = capture_link_type(args.input)
    stats = CompareStats()
    summary = InputSummary(args.input)
    engine = WindowEngine(cfg, link_type, stats)
    verdicts = [v for _, v in engine.run(summary.track(read_capture(args.input))) if v is not None]
    try:
        dist = distance_stats(verdicts, args.time_bin)
    except EmptyInput:
        dist = None
    out = sys.stdout
    if args.json:
        doc = {
            "input": summary.to_dict(),
            "config": cfg.describe(),
            "survival": stats.survival().tolist(),
            "survival_guard_passing": stats.survival(guard_passing_only=True).tolist(),
            "comparisons": comparison_dict(stats),
            "distance": dist.to_dict() if dist else None,
            "types": {t.value: stats.matches_per_type[t] for t in stats.matches_per_type},
        }
        out.write(json.dumps(doc, indent=2) + "\n")
        return 0
    all_pairs = stats.survival()
    passing = stats.survival(guard_passing_only=True)
    out.write("# survival\nbytes\tsurvival\tsurvival_guard_passing\n")
    for b in range(all_pairs.shape[0]):
        out.write(f"{b}\t{all_pairs[b]:.6g}\t{passing[b]:.6g}\n")
    out.write("\n# packet_distance_histogram\ndistance\tcount\n")
    for b, c in (dist.distance_histogram if dist else []):
        out.write(f"{b}\t{c}\n")
    out.write("\n# time_delta_histogram\nseconds\tcount\n")
    for b, c in (dist.time_histogram if dist else []):
        out.write(f"{b:.9g}\t{c}\n")
    out.write("\n# types\ntype\tcount\n")
    for t, c in stats.matches_per_type.items():
        out.write(f"{t.value}\t{c}\n")
    if dist:
        out.write(
            "\n# distance_summary\nmetric\tvalue\n"
            f"mean_time_delta_s\t{dist.mean_time_delta:.9g}\nmax_time_delta_s\t{dist.max_time_delta:.9g}\n"
            f"mean_packet_distance\t{dist.mean_packet_distance:.6g}\nmax_packet_distance\t{dist.max_packet_distance}\n"
        )
    return 0


def cmd_dimension(args) -> int:
    max_frame = parse_size(args.max_frame)
    min_cap = parse_rate(args.min_capacity)
    inputs = dim.DimensionInputs(args.queue_len, max_frame * 8, min_cap, tuple(args.interfering_pps or ()))
    result = {
        "max_system_time_s": dim.max_system_time(args.queue_len, max_frame * 8, min_cap),
        "window_size_s": dim.window_size(inputs),
    }
    if args.rho is not None:
        frame = parse_size(args.frame_len) if args.frame_len else max_frame
        cap = parse_rate(args.capacity) if args.capacity else min_cap
        model = dim.QueueModel.from_link(args.rho, frame * 8, cap)
        result.update(rho=model.rho, service_time_s=model.delta, mean_queue_len=model.nq_mean,
                      mean_system_time_s=model.s_mean)
        if args.interfering_pps:
            result["mean_packets_between"] = dim.expected_packets_between(model.s_mean, args.interfering_pps)
    elif args.interfering_pps:
        raise UsageError("--interfering-pps needs --rho to predict the mean system time")
    if args.json:
        sys.stdout.write(json.dumps(result, indent=2) + "\n")
        return 0
    lines = [
        f"max system time   max(s_n) = {fmt_duration(result['max_system_time_s'])}",
        f"window size       WS       = {fmt_duration(result['window_size_s'])}",
    ]
    if "rho" in result:
        lines += [
            f"utilization       rho      = {result['rho']:.4g}",
            f"service time      delta    = {fmt_duration(result['service_time_s'])}",
            f"mean queue length Nq       = {result['mean_queue_len']:.4g} packets",
            f"mean system time  s        = {fmt_duration(result['mean_system_time_s'])}",
        ]
    if "mean_packets_between" in result:
        lines.append(f"packets between   dn       = {result['mean_packets_between']:.4g} packets")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_synth(args) -> int:
    dup_type = DuplicateType.parse(args.type)
    profile = DuplicateProfile(
        dup_type,
        nat_port=args.nat_port,
        vlan_tag=args.vlan_tag,
        dscp=args.dscp,
        proxy_field=args.proxy_field,
    )
    common = {"seed": args.seed, "profile": profile}
    if args.duration is not None:
        common["duration"] = parse_duration(args.duration)
    if args.switching_time is not None:
        common["switching_time"] = parse_duration(args.switching_time)
    if args.queue_cap is not None:
        common["output_queue_cap"] = args.queue_cap
    if args.capacity is not None:
        common["link_capacity"] = parse_rate(args.capacity)
    if args.mirror_capacity is not None:
        common["mirror_capacity"] = parse_rate(args.mirror_capacity)
    if args.config:
        cfg = config_from_dict(json.loads(Path(args.config).read_text()), **common)
    else:
        common.setdefault("duration", 10.0)
        cfg = reference_testbed(args.interfering_pps, dup_type=dup_type, transport=args.transport, **common)
    trace = simulate(cfg)
    labels = args.labels or f"{args.output}.labels.jsonl"
    trace.write(args.output, labels)
    sep = trace.schedule.separations
    summary = {
        "capture": str(args.output),
        "labels": str(labels),
        "packets": len(trace.packets),
        "duplicates": len(trace.labels),
        "dropped": trace.dropped,
        "mean_separation_s": float(sep.mean()) if sep.size else None,
        "max_separation_s": float(sep.max()) if sep.size else None,
        "mean_packets_between": float(trace.schedule.packets_between.mean()) if sep.size else None,
    }
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spandedup",
        description="Detect, classify and remove SPAN/mirror-port duplicate packets in pcap traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dedup", help="find duplicates and remove, annotate or just report them")
    p.add_argument("input", help="classic pcap file (Ethernet)")
    p.add_argument("-o", "--output", help="output pcap (remove) or verdict JSONL (annotate)")
    p.add_argument("--mode", choices=("remove", "annotate", "report"), default="remove")
    p.add_argument("--keep", choices=("originals", "none"), default="originals",
                   help="remove mode: keep the first copy (default) or drop both copies")
    p.add_argument("--report", metavar="PATH", help="write the JSON report here instead of stdout")
    p.add_argument("--time-bin", type=parse_duration, default=1e-4, metavar="DUR",
                   help="bin width of the time-delta histogram (default 100us)")
    _add_window_flags(p)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("stats", help="survival curve, distance histograms and per-type counts")
    p.add_argument("input", help="classic pcap file (Ethernet)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of tab-separated columns")
    p.add_argument("--time-bin", type=parse_duration, default=1e-4, metavar="DUR")
    _add_window_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("dimension", help="window size and M/D/1 predictions for a device")
    p.add_argument("--queue-len", type=float, required=True, metavar="PKTS", help="largest output queue")
    p.add_argument("--max-frame", required=True, metavar="BYTES", help="largest on-wire frame, e.g. 1538")
    p.add_argument("--min-capacity", required=True, metavar="RATE", help="slowest link, e.g. 100Mbps")
    p.add_argument("--rho", type=float, help="output port utilization for the M/D/1 predictions")
    p.add_argument("--frame-len", metavar="BYTES", help="frame length for the service time (default --max-frame)")
    p.add_argument("--capacity", metavar="RATE", help="port capacity for the service time (default --min-capacity)")
    p.add_argument("--interfering-pps", type=float, nargs="+", metavar="PPS",
                   help="rates of traffic mirrored between copies; summed")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_dimension)

    p = sub.add_parser("synth", help="simulate a mirrored switch and write a labelled capture")
    p.add_argument("-o", "--output", required=True, help="output pcap")
    p.add_argument("--labels", help="label JSONL (default OUTPUT.labels.jsonl)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--preset", choices=("testbed",), default="testbed")
    p.add_argument("--config", help="JSON stream/port configuration instead of the preset")
    p.add_argument("--interfering-pps", type=float, default=SWEEP_RATES[0],
                   help=f"interfering rate for the preset (testbed sweep: {', '.join(str(int(r)) for r in SWEEP_RATES)})")
    p.add_argument("--duration", help="simulated time (default 10s)")
    p.add_argument("--type", default="switching", help="duplicate profile: switching, routing, nat or proxy")
    p.add_argument("--transport", choices=("udp", "tcp"), help="main stream transport (proxy forces tcp)")
    p.add_argument("--nat-port", type=int, help="nat: also map the source port to this value")
    p.add_argument("--proxy-field", choices=("seq", "ack"), default="seq")
    p.add_argument("--vlan-tag", type=int, metavar="VID", help="egress copies gain an 802.1Q tag")
    p.add_argument("--dscp", type=int, help="egress copies are remarked to this DSCP")
    p.add_argument("--switching-time", metavar="DUR")
    p.add_argument("--queue-cap", type=int, metavar="PKTS")
    p.add_argument("--capacity", metavar="RATE", help="output port capacity (default 100Mbps)")
    p.add_argument("--mirror-capacity", metavar="RATE", help="model a finite mirror port")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPANDEDUP_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        # ValueError covers unit parsing, dimensioning, capture and config errors
        kind = type(exc).__name__
        log.debug("failure", exc_info=True)
        sys.stderr.write(f"spandedup {args.command}: {kind}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"spandedup {args.command}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
