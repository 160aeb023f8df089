#!/usr/bin/env python3
"""Run the same retrieval in process and over TCP, then diff the transcripts.

Spawns one listener per server on loopback ports, pushes the database to
each, and drives a client against them.  The wire adds framing, not
behavior: answers and transcripts must match the in-process run exactly.
"""

import contextlib
import random

from pltkit import (Database, Demand, PltServer, build_query, build_transcript,
                    client_run, field_new, push_database, recover_demand,
                    required_symbols, server_answer)

N, K, D, Q = 2, 4, 3, 7
SEED = 4


def main():
    field = field_new(Q)
    rng = random.Random(SEED)
    db = Database.random(field, K, required_symbols(N, K, D), rng)
    demand = Demand((1, 3, 4), (2, 5, 1), field)
    bundle = build_query(demand, K, N, rng)

    local_answers = [server_answer(sq, db) for sq in bundle.server_queries]
    local = build_transcript(bundle, local_answers, SEED)

    with contextlib.ExitStack() as stack:
        # start empty, then load over the wire, as a deployment would
        servers = [stack.enter_context(PltServer()) for _ in range(N)]
        for srv in servers:
            push_database(srv.address, db)
            print(f"loaded {db.k} messages x {db.s} symbols "
                  f"onto {srv.address[0]}:{srv.address[1]}")
        answers = client_run([srv.address for srv in servers], bundle)

    remote = build_transcript(bundle, answers, SEED)
    print(f"\nanswers identical: {list(answers) == list(local_answers)}")
    print(f"transcripts identical: {remote.to_json() == local.to_json()}")
    recovered = recover_demand(bundle, answers)
    print(f"recovered first symbols: {recovered[:8]}")
    print(f"\ntranscript: {local.to_json()}")


if __name__ == "__main__":
    main()
