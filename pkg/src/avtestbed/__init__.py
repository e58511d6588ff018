"""avtestbed: scenario-based simulation testing for autonomous vehicles.

Subpackages by role: scenario (data model and documents), wire (client/server
protocol), supervisor (simulation kernel and TCP server), controllers (entity
behaviors), covering (combinatorial test tables), robustness (MTL monitoring),
falsify (search), presets (demo scene), cli (command line).
"""

__version__ = "0.1.0"
