"""disputekit: anonymous two-phase dispute resolution, simulated end to end.

The package models a small on-chain court: humans prove personhood once,
join an anonymous juror pool, and resolve disputes in two voting phases —
an anonymous juror vote over the parties, then a quadratic runoff between
the jurors' proposals, with all ballots travelling encrypted through a
single trusted coordinator. Reputation, soulbound badges, fee escrow, a
game-theoretic strategy oracle, and a scripted attack harness round out
the protocol surface.
"""

__version__ = "0.1.0"
