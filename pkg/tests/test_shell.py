import numpy as np
import pytest

from inheritlab.errors import ResolutionError
from inheritlab.geometry import get_metric
from inheritlab.operators import OperatorMatrix, smallest_singular_value
from inheritlab.shell import (
    ShellDiscretization,
    assemble_shell_operator,
    radial_block,
    scalar_sigma_min,
    shell_probe,
)


def test_discretization_geometry():
    disc = ShellDiscretization.from_resolution(2.0, 20.0, 1.0, nodes_per_wavelength=20.0, l_max=2)
    assert disc.nodes_per_wavelength(1.0) == pytest.approx(20.0)
    assert disc.modes == 9
    assert disc.size == 3 * 9 * disc.n_radial
    assert disc.radii[0] == pytest.approx(2.0 + disc.spacing)
    with pytest.raises(ValueError):
        ShellDiscretization(5.0, 2.0, 10)
    with pytest.raises(ValueError):
        ShellDiscretization(1.0, 2.0, 10, closure="periodic")


def test_dirichlet_block_is_selfadjoint():
    disc = ShellDiscretization(2.0, 12.0, 200, l_max=1, closure="dirichlet")
    block = OperatorMatrix(radial_block(disc, 1.0, 1), disc.radial_measure, "l=1")
    assert block.selfadjoint_defect() < 1e-13
    outgoing = ShellDiscretization(2.0, 12.0, 200, l_max=1, closure="outgoing")
    assert OperatorMatrix(radial_block(outgoing, 1.0, 1), outgoing.radial_measure).selfadjoint_defect() > 0.0


def test_dirichlet_is_the_default_closure():
    assert ShellDiscretization(2.0, 12.0, 200).closure == "dirichlet"
    assert ShellDiscretization.from_resolution(2.0, 12.0, 1.0).closure == "dirichlet"
    disc = ShellDiscretization.from_resolution(2.0, 10.0, 1.0, nodes_per_wavelength=16.0, l_max=1)
    assert assemble_shell_operator(disc, get_metric("flat3"), 1.0).selfadjoint_defect() < 1e-12


def test_full_operator_repeats_radial_blocks(flat):
    disc = ShellDiscretization.from_resolution(2.0, 10.0, 1.0, nodes_per_wavelength=16.0, l_max=1,
                                               closure="outgoing")
    op = assemble_shell_operator(disc, flat, 1.0, weighted=True)
    assert op.n == disc.size
    full = smallest_singular_value(op, "dense")
    assert full == pytest.approx(scalar_sigma_min(disc, 1.0, "dense"), rel=1e-10)


def test_resolution_and_metric_checks(flat):
    coarse = ShellDiscretization(2.0, 20.0, 10)
    with pytest.raises(ResolutionError):
        assemble_shell_operator(coarse, flat, 1.0)
    fine = ShellDiscretization.from_resolution(2.0, 10.0, 1.0)
    with pytest.raises(ValueError, match="flat metric only"):
        assemble_shell_operator(fine, get_metric("conformal"), 1.0)
    with pytest.raises(ValueError):
        assemble_shell_operator(fine, flat, 0.0)


def test_probe_reports_trend(flat):
    report = shell_probe(flat, a=1.0, r0=2.0, r_max_values=(10.0, 20.0, 40.0), nodes_per_wavelength=12.0,
                         l_max=1, closure="outgoing")
    assert len(report.sigma_min) == 3 and len(report.ratios) == 2
    assert all(np.isfinite(report.ratios)) and min(report.sigma_min) > 0.0
    assert report.oracle_gap < 1e-6
    record = report.to_record()
    assert record["pass"] == report.passed
    with pytest.raises(ValueError):
        shell_probe(flat, r_max_values=(10.0, 20.0))
