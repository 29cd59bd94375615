// Copyright 2026 The arcane-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "arcane/errors.hpp"

namespace arcane {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kFieldOverflow: return "FieldOverflow";
    case Errc::kBadKernelId: return "BadKernelId";
    case Errc::kNotXmnmc: return "NotXmnmc";
    case Errc::kInvalidEew: return "InvalidEew";
    case Errc::kOutOfBounds: return "OutOfBounds";
    case Errc::kMisaligned: return "Misaligned";
    case Errc::kLockNotHeld: return "LockNotHeld";
    case Errc::kNoEvictableLine: return "NoEvictableLine";
    case Errc::kDoubleRelease: return "DoubleRelease";
    case Errc::kAtFull: return "AtFull";
    case Errc::kVlTooLarge: return "VlTooLarge";
    case Errc::kNotComputeLine: return "NotComputeLine";
    case Errc::kCapacityExceeded: return "CapacityExceeded";
    case Errc::kNotResident: return "NotResident";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kIllegalInstruction: return "IllegalInstruction";
    case Errc::kParseError: return "ParseError";
    case Errc::kConfigInvariantViolated: return "ConfigInvariantViolated";
    case Errc::kDeadlock: return "Deadlock";
  }
  return "Unknown";
}

}  // namespace arcane
