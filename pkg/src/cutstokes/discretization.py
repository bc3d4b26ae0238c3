"""Everything derived from (mesh size, geometry) bundled for the assemblers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoundaryQuadrature,
    Classification,
    CutQuadrature,
    LevelSetGeometry,
    build_boundary_quadrature,
    build_cut_quadrature,
    classify_elements,
)
from .mesh import ActiveMesh, BackgroundMesh, MacroPartition, build_macro_partition, extract_active_mesh, generate_structured_mesh
from .spaces import DofMap, MacroElementBasis, build_basis, build_dofmap, evaluate_at, locate_sub_triangle


@dataclass
class Discretization:
    mesh: BackgroundMesh
    geom: LevelSetGeometry
    classification: Classification
    active: ActiveMesh
    partition: MacroPartition
    basis: MacroElementBasis
    dofmap: DofMap
    cut_quadrature: CutQuadrature
    boundary_quadrature: BoundaryQuadrature

    @classmethod
    def build(cls, mesh: BackgroundMesh, geom: LevelSetGeometry, order: int = 2, n_mult_components: int = 2):
        classification = classify_elements(mesh, geom)
        active = extract_active_mesh(mesh, classification)
        partition = build_macro_partition(mesh, active)
        basis = build_basis(mesh, active, partition)
        dofmap = build_dofmap(mesh, active, n_mult_components)
        cq = build_cut_quadrature(partition, classification, order)
        bq = build_boundary_quadrature(mesh, geom, classification, order)
        return cls(mesh, geom, classification, active, partition, basis, dofmap, cq, bq)

    @classmethod
    def structured(cls, n: int, geom: LevelSetGeometry, box=((-1.0, -1.0), (1.0, 1.0)), **kw):
        return cls.build(generate_structured_mesh(n, box), geom, **kw)

    def with_multiplier_components(self, n_mult_components: int) -> "Discretization":
        dofmap = build_dofmap(self.mesh, self.active, n_mult_components)
        return Discretization(
            self.mesh, self.geom, self.classification, self.active, self.partition,
            self.basis, dofmap, self.cut_quadrature, self.boundary_quadrature,
        )

    @property
    def h(self) -> float:
        return self.active.h

    def rows(self, elements) -> np.ndarray:
        return self.active.element_index[elements]

    def basis_at(self, elements, points, sub=None):
        """Local values/gradients at points of the given background elements."""
        rows = self.rows(elements)
        if sub is None:
            sub = locate_sub_triangle(self.partition, rows, points)
        vals, grads = evaluate_at(self.basis, rows, sub, points)
        return rows, vals, grads

    def velocity_at(self, velocity, elements, points, sub=None):
        """Discrete velocity value ``(m, 2)`` and gradient ``(m, 2, 2)`` at points."""
        rows, vals, grads = self.basis_at(elements, points, sub)
        c = velocity[self.dofmap.velocity_local[rows]]
        return np.einsum("mf,mfc->mc", c, vals), np.einsum("mf,mfcd->mcd", c, grads)

    def divergence(self, velocity) -> np.ndarray:
        """Element-wise constant divergence on the active elements."""
        return np.einsum("nf,nf->n", self.basis.div, velocity[self.dofmap.velocity_local])
