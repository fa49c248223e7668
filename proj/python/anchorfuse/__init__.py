# Copyright 2026 The Anchorfuse Authors. All rights reserved.
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

"""Anchor-based collaborative 3D detection on synthetic multi-agent scenes."""

from ._anchorfuse import (  # noqa: F401
    CodecError,
    Config,
    ConfigError,
    DimensionError,
    InfeasibleError,
    NumericalError,
    ParamStore,
    bev_iou,
    decode_message,
    encode_message,
    evaluate,
    evaluate_ap,
    feature_map_bytes,
    init_params,
    message_bytes,
    selftest,
    solve_assignment,
    train,
)

__version__ = "0.1.0"
