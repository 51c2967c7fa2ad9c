"""Command line entry point: ``fmap-export IMAGE OUT``."""

from __future__ import annotations

import sys

import click

from .errors import ImageReadError, WeightLoadError
from .export import export

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_WEIGHTS = 2


@click.command()
@click.argument("image", type=click.Path())
@click.argument("out", type=click.Path())
@click.option(
    "--max-side",
    type=click.IntRange(min=16),
    default=None,
    help="Downscale so the longer side is at most this many pixels.",
)
@click.option(
    "--weights",
    type=click.Choice(["pretrained", "random"]),
    default="pretrained",
    show_default=True,
    help="Use ImageNet weights or a seeded random initialization.",
)
@click.option(
    "--seed",
    type=int,
    default=0,
    show_default=True,
    help="Seed for --weights random.",
)
def main(image: str, out: str, max_side: int | None, weights: str, seed: int) -> None:
    """Write VGG16 convolution activations for IMAGE to OUT."""
    try:
        manifest = export(
            image, out, max_side=max_side, weights=weights, seed=seed
        )
    except ImageReadError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except WeightLoadError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_WEIGHTS)
    click.echo(manifest.to_json())


if __name__ == "__main__":
    main()
