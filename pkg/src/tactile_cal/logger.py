# Copyright 2026 tactile-cal contributors
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

import logging
from typing import Tuple

from progressbar import streams
from rp2.logger import create_logger

# Must be called before any logging setup
streams.wrap_stderr()

# Libraries that log font lookups and PNG chunk details while reports are written
_THIRD_PARTY_LOGGERS: Tuple[str, ...] = ("matplotlib", "PIL")
for _name in _THIRD_PARTY_LOGGERS:
    logging.getLogger(_name).setLevel(logging.WARNING)

LOGGER: logging.Logger = create_logger("tactile_cal")


def plugin_logger(plugin_kind: str, plugin_name: str) -> logging.Logger:
    return create_logger(f"tactile_cal.{plugin_kind}/{plugin_name}")
