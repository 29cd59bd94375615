# Copyright 2026 The arcane-sim Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Python interface to the arcane-sim cycle-level simulator."""

from arcane_sim._core import (
    CSV_HEADER,
    MatrixDescriptor,
    ParseError,
    SimConfig,
    SimError,
    Workload,
    conv_layer_workload,
    decode,
    encode,
    load_config,
    load_workload,
    parse_workload,
    random_matrix,
    run,
    sweep_overhead,
    sweep_speedup,
)

__all__ = [
    "CSV_HEADER",
    "MatrixDescriptor",
    "ParseError",
    "SimConfig",
    "SimError",
    "Workload",
    "conv_layer_workload",
    "decode",
    "encode",
    "load_config",
    "load_workload",
    "parse_workload",
    "random_matrix",
    "run",
    "sweep_overhead",
    "sweep_speedup",
]
