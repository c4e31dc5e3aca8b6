"""laca-server: serve the /v1 wire protocol."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .http import make_server, serve_forever
from .sampling import BuiltinSampler, UpstreamProxy
from .service import ModelService


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="laca-server", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="start the model server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.add_argument("--model-dir", default="models")
    p.add_argument("--generator", choices=("builtin", "proxy"), default="builtin")
    p.add_argument("--upstream-url", help="required with --generator proxy")
    p.add_argument("--token", default=os.environ.get("LACA_BACKEND_TOKEN"))
    p.add_argument("--epoch-search", action="store_true",
                   help="honour epoch_grid/dev_uri hyperparams for epoch selection")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.generator == "proxy":
        if not args.upstream_url:
            parser.error("--generator proxy requires --upstream-url")
        generator = UpstreamProxy(args.upstream_url)
    else:
        generator = BuiltinSampler()

    service = ModelService(args.model_dir, generator=generator, epoch_search=args.epoch_search)
    serve_forever(make_server(service, args.host, args.port, auth_token=args.token))
    return 0


if __name__ == "__main__":
    sys.exit(main())
