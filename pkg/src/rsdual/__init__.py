"""Decorated-tree calculus for singular SPDEs and a numerical lab for their tangent and dual equations."""

__version__ = "0.1.0"
